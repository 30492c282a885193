import { ServiceClient } from "./api.js";
import { Viewer } from "./viewer.js";

function must<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
}

const base = (window as { MESHRECON_URL?: string }).MESHRECON_URL ?? "http://127.0.0.1:8642";
const viewer = new Viewer(
  new ServiceClient(base),
  must<HTMLImageElement>("frame"),
  must("status"),
  must("overlay"),
  must("edits"),
);
viewer.start().catch((err) => {
  must("status").textContent = `failed to reach service: ${String(err)}`;
});
