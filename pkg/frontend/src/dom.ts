// Thin DOM adapter: replace the container's content with the descriptor
// tree. Trees here are small (tens of cards), so full re-render is fine.

import type { Action } from "./state.js";
import type { VNode } from "./view.js";

const SVG_TAGS = new Set(["svg", "line", "rect", "text", "g", "path", "image"]);
const SVG_NS = "http://www.w3.org/2000/svg";

export type Dispatch = (action: Action) => void;

function build(vnode: VNode | string, dispatch: Dispatch): Node {
  if (typeof vnode === "string") return document.createTextNode(vnode);
  const el = SVG_TAGS.has(vnode.tag)
    ? document.createElementNS(SVG_NS, vnode.tag)
    : document.createElement(vnode.tag);
  for (const [key, value] of Object.entries(vnode.attrs)) {
    el.setAttribute(key, value);
  }
  if (vnode.on?.click) {
    const action = vnode.on.click;
    el.addEventListener("click", (ev) => {
      ev.stopPropagation();
      dispatch(action);
    });
  }
  for (const child of vnode.children) {
    el.appendChild(build(child, dispatch));
  }
  return el;
}

export function render(vnode: VNode, container: Element, dispatch: Dispatch): void {
  container.replaceChildren(build(vnode, dispatch));
}
