/**
 * Single-page view over the scholar API: query box with a pipeline
 * switch, answer panel with inline citation chips, evidence cards with
 * provenance expansion, and an expert feedback form.
 *
 * Invariants enforced here:
 * - answer text is rendered verbatim from the /query response; chips
 *   are one-to-one with answer.citations;
 * - the evidence panel shows exactly the response's evidence list;
 * - one in-flight query at a time, stale responses discarded by
 *   sequence number;
 * - switching the pipeline re-queries instead of re-labeling the
 *   cached response;
 * - the feedback form blocks out-of-range scores client-side and
 *   blocks a second submit for the same answer.
 */

import {
  ApiError,
  EvidenceItemView,
  Pipeline,
  QueryResponse,
  ScholarApi,
} from "./api";

const SCORE_MIN = 0;
const SCORE_MAX = 5;

interface AppState {
  question: string;
  pipeline: Pipeline;
  response: QueryResponse | null;
  requestSeq: number;
  renderedSeq: number;
  feedbackSubmitted: boolean;
  error: string | null;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Split answer text on [n] markers so cited indices become chips. */
export function splitAnswerText(
  text: string,
  citations: number[],
): Array<{ kind: "text"; value: string } | { kind: "chip"; index: number }> {
  const cited = new Set(citations);
  const parts: Array<
    { kind: "text"; value: string } | { kind: "chip"; index: number }
  > = [];
  let cursor = 0;
  const pattern = /\[(\d+)\]/g;
  let match: RegExpExecArray | null;
  while ((match = pattern.exec(text)) !== null) {
    const index = parseInt(match[1], 10);
    if (!cited.has(index)) continue; // not a citation: leave as plain text
    if (match.index > cursor) {
      parts.push({ kind: "text", value: text.slice(cursor, match.index) });
    }
    parts.push({ kind: "chip", index });
    cursor = match.index + match[0].length;
  }
  if (cursor < text.length) {
    parts.push({ kind: "text", value: text.slice(cursor) });
  }
  return parts;
}

export function validateScores(
  contentScore: number,
  citationScore: number,
): string | null {
  for (const [label, value] of [
    ["content score", contentScore],
    ["citation score", citationScore],
  ] as const) {
    if (!Number.isInteger(value) || value < SCORE_MIN || value > SCORE_MAX) {
      return `${label} must be an integer between ${SCORE_MIN} and ${SCORE_MAX}`;
    }
  }
  return null;
}

export class App {
  private readonly state: AppState = {
    question: "",
    pipeline: "vector",
    response: null,
    requestSeq: 0,
    renderedSeq: 0,
    feedbackSubmitted: false,
    error: null,
  };

  private readonly queryInput: HTMLInputElement;
  private readonly pipelineSelect: HTMLSelectElement;
  private readonly submitButton: HTMLButtonElement;
  private readonly statusPanel: HTMLElement;
  private readonly answerPanel: HTMLElement;
  private readonly evidencePanel: HTMLElement;
  private readonly feedbackPanel: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ScholarApi,
  ) {
    const form = el("form", "query-form");
    this.queryInput = el("input", "query-input");
    this.queryInput.placeholder = "Ask the literature…";
    this.pipelineSelect = el("select", "pipeline-select");
    for (const value of ["vector", "graph"] as const) {
      const option = el("option", undefined, value);
      option.value = value;
      this.pipelineSelect.appendChild(option);
    }
    this.submitButton = el("button", "query-submit", "Ask");
    this.submitButton.type = "submit";
    form.append(this.queryInput, this.pipelineSelect, this.submitButton);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitQuery(this.queryInput.value);
    });
    this.pipelineSelect.addEventListener("change", () => {
      this.state.pipeline = this.pipelineSelect.value as Pipeline;
      // a pipeline switch must re-query, never re-label a cached answer
      if (this.state.question) void this.submitQuery(this.state.question);
    });

    this.statusPanel = el("div", "status-panel");
    this.answerPanel = el("section", "answer-panel");
    this.evidencePanel = el("section", "evidence-panel");
    this.feedbackPanel = el("section", "feedback-panel");
    this.root.append(
      form,
      this.statusPanel,
      this.answerPanel,
      this.evidencePanel,
      this.feedbackPanel,
    );
  }

  async submitQuery(question: string): Promise<void> {
    const trimmed = question.trim();
    if (!trimmed) return;
    this.state.question = trimmed;
    const seq = ++this.state.requestSeq;
    this.submitButton.disabled = true;
    this.statusPanel.textContent = "Retrieving…";
    try {
      const response = await this.api.query(trimmed, this.state.pipeline);
      if (seq < this.state.requestSeq) return; // stale response: discard
      this.state.renderedSeq = seq;
      this.state.response = response;
      this.state.feedbackSubmitted = false;
      this.state.error = null;
      this.render();
    } catch (error) {
      if (seq < this.state.requestSeq) return;
      this.state.error =
        error instanceof ApiError
          ? `${error.message} (status ${error.status})`
          : String(error);
      this.renderError();
    } finally {
      if (seq === this.state.requestSeq) this.submitButton.disabled = false;
    }
  }

  private renderError(): void {
    this.statusPanel.replaceChildren();
    const banner = el("div", "error-banner", this.state.error ?? "error");
    const retry = el("button", "retry-button", "Retry");
    retry.addEventListener("click", () => {
      void this.submitQuery(this.state.question);
    });
    banner.appendChild(retry);
    this.statusPanel.appendChild(banner);
  }

  private render(): void {
    const response = this.state.response;
    if (!response) return;
    this.statusPanel.replaceChildren();
    this.renderAnswer(response);
    this.renderEvidence(response.evidence);
    this.renderFeedback(response);
  }

  private renderAnswer(response: QueryResponse): void {
    this.answerPanel.replaceChildren();
    const { answer } = response;
    if (answer.abstained) {
      this.answerPanel.appendChild(
        el(
          "div",
          "abstention-banner",
          "The system could not find sufficient evidence to answer.",
        ),
      );
      this.answerPanel.appendChild(el("p", "answer-text", answer.text));
      return;
    }
    const body = el("p", "answer-text");
    for (const part of splitAnswerText(answer.text, answer.citations)) {
      if (part.kind === "text") {
        body.appendChild(document.createTextNode(part.value));
      } else {
        const chip = el("button", "citation-chip", `[${part.index}]`);
        chip.type = "button";
        chip.dataset.citation = String(part.index);
        chip.addEventListener("click", () => this.focusEvidence(part.index));
        body.appendChild(chip);
      }
    }
    this.answerPanel.appendChild(body);
    const meta = el(
      "div",
      "answer-meta",
      `pipeline: ${answer.pipeline} · ${answer.latency_seconds.toFixed(2)}s` +
        (response.subgraph
          ? ` · subgraph ${response.subgraph.node_count} nodes / ${response.subgraph.edge_count} edges`
          : ""),
    );
    this.answerPanel.appendChild(meta);
    for (const violation of response.citation_violations) {
      this.answerPanel.appendChild(
        el("div", "citation-violation", violation),
      );
    }
  }

  private renderEvidence(items: EvidenceItemView[]): void {
    this.evidencePanel.replaceChildren();
    for (const item of items) {
      const card = el("article", "evidence-card");
      card.dataset.index = String(item.index);
      card.appendChild(
        el("header", "evidence-header", `[${item.index}] ${item.kind}`),
      );
      card.appendChild(el("p", "evidence-text", item.text));
      card.appendChild(
        el("div", "evidence-source", `source: ${item.source_doi}`),
      );
      const expand = el("button", "evidence-expand", "Show source paragraph");
      expand.type = "button";
      expand.addEventListener("click", () => {
        void this.expandEvidence(card, item, expand);
      });
      card.appendChild(expand);
      this.evidencePanel.appendChild(card);
    }
  }

  private async expandEvidence(
    card: HTMLElement,
    item: EvidenceItemView,
    button: HTMLButtonElement,
  ): Promise<void> {
    button.disabled = true;
    try {
      const detail = await this.api.evidence(item.ref);
      const holder = el("div", "evidence-detail");
      const paragraphs =
        detail.kind === "chunk"
          ? detail.paragraphs
          : detail.source_paragraph
            ? [detail.source_paragraph]
            : [];
      for (const paragraph of paragraphs) {
        const block = el("blockquote", "evidence-paragraph", paragraph.text);
        block.dataset.pid = paragraph.pid;
        holder.appendChild(block);
      }
      card.appendChild(holder);
    } catch (error) {
      button.disabled = false;
      card.appendChild(
        el(
          "div",
          "error-banner",
          error instanceof ApiError ? error.message : String(error),
        ),
      );
    }
  }

  focusEvidence(index: number): void {
    for (const card of this.evidencePanel.querySelectorAll<HTMLElement>(
      ".evidence-card",
    )) {
      const focused = card.dataset.index === String(index);
      card.classList.toggle("focused", focused);
      if (focused && typeof card.scrollIntoView === "function") {
        card.scrollIntoView({ block: "nearest" });
      }
    }
  }

  private renderFeedback(response: QueryResponse): void {
    this.feedbackPanel.replaceChildren();
    const form = el("form", "feedback-form");
    const content = el("input", "feedback-content");
    content.type = "number";
    content.min = String(SCORE_MIN);
    content.max = String(SCORE_MAX);
    const citation = el("input", "feedback-citation");
    citation.type = "number";
    citation.min = String(SCORE_MIN);
    citation.max = String(SCORE_MAX);
    const notes = el("input", "feedback-notes");
    const submit = el("button", "feedback-submit", "Submit scores");
    submit.type = "submit";
    const message = el("div", "feedback-message");
    form.append(content, citation, notes, submit, message);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      if (this.state.feedbackSubmitted) {
        message.textContent = "Feedback already submitted for this answer.";
        return;
      }
      const contentScore = Number(content.value);
      const citationScore = Number(citation.value);
      const invalid = validateScores(contentScore, citationScore);
      if (invalid) {
        message.textContent = invalid;
        return;
      }
      submit.disabled = true;
      void this.api
        .feedback({
          ref: response.evidence[0]?.ref ?? "",
          pipeline: response.answer.pipeline,
          content_score: contentScore,
          citation_score: citationScore,
          notes: notes.value,
          rater_id: "",
        })
        .then(() => {
          this.state.feedbackSubmitted = true;
          message.textContent = "Thank you — feedback recorded.";
        })
        .catch((error: unknown) => {
          submit.disabled = false;
          message.textContent =
            error instanceof ApiError ? error.message : String(error);
        });
    });
    this.feedbackPanel.appendChild(form);
  }
}

export function mountApp(root: HTMLElement, api: ScholarApi): App {
  return new App(root, api);
}
