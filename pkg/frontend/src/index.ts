import { ScholarApi } from "./api";
import { mountApp } from "./app";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}
mountApp(root, new ScholarApi(""));
