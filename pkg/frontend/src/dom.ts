/**
 * VNode → real DOM. The only module that touches the document; everything
 * upstream builds plain objects so it can run (and be tested) in Node.
 */

import type { VNode } from "./render.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const SVG_TAGS = new Set(["svg", "polyline", "line", "text", "path", "rect", "circle", "g"]);

export function mount(node: VNode | string, doc: Document = document): Node {
  if (typeof node === "string") return doc.createTextNode(node);
  const element = SVG_TAGS.has(node.tag)
    ? doc.createElementNS(SVG_NS, node.tag)
    : doc.createElement(node.tag);
  for (const [name, value] of Object.entries(node.attrs)) {
    element.setAttribute(name, value);
  }
  for (const child of node.children) {
    element.appendChild(mount(child, doc));
  }
  return element;
}

/** Replace `container`'s children with the rendered tree. */
export function update(container: Element, node: VNode): void {
  const doc = container.ownerDocument;
  container.replaceChildren(mount(node, doc));
}
