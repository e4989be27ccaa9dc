// Minimal DOM helpers; no framework, no templates, just elements.

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(typeof child === "string" ? document.createTextNode(child) : child);
  }
  return node;
}

export function clear(node: HTMLElement): HTMLElement {
  node.replaceChildren();
  return node;
}

export function table(headers: string[], rows: (string | Node)[][]): HTMLTableElement {
  const head = el("tr", {}, headers.map((h) => el("th", {}, [h])));
  const body = rows.map((cells) =>
    el("tr", {}, cells.map((c) => el("td", {}, [c]))),
  );
  return el("table", { class: "grid" }, [el("thead", {}, [head]), el("tbody", {}, body)]);
}

export function banner(kind: "info" | "error" | "ok", text: string): HTMLElement {
  return el("div", { class: `banner ${kind}` }, [text]);
}

export function field(labelText: string, input: HTMLElement): HTMLElement {
  return el("label", { class: "field" }, [el("span", {}, [labelText]), input]);
}

export function download(filename: string, bytes: Uint8Array, mime: string): void {
  const blob = new Blob([bytes as BlobPart], { type: mime });
  const url = URL.createObjectURL(blob);
  const anchor = el("a", { href: url, download: filename });
  document.body.append(anchor);
  anchor.click();
  anchor.remove();
  URL.revokeObjectURL(url);
}
