// Renders the MAP hierarchy from a /report payload as a collapsible tree.
// Nodes whose parent edge is uncertain (below the session threshold) are
// painted red and reveal their second most likely parent on hover.

import type { Report, UncertainNode } from "./api.js";

function childrenOf(parents: number[]): Map<number, number[]> {
  const map = new Map<number, number[]>();
  parents.forEach((parent, index) => {
    const child = index + 1;
    if (!map.has(parent)) map.set(parent, []);
    map.get(parent)!.push(child);
  });
  return map;
}

export function renderTree(report: Report, container: HTMLElement): void {
  container.textContent = "";
  const uncertainByNode = new Map<number, UncertainNode>(
    report.uncertain.map((u) => [u.node, u]),
  );
  const children = childrenOf(report.map_tree.parents);

  const build = (node: number): HTMLLIElement => {
    const item = document.createElement("li");
    const label = document.createElement("span");
    label.className = "node";
    label.dataset.node = String(node);
    label.textContent = report.labels[node];

    const uncertain = uncertainByNode.get(node);
    if (uncertain) {
      label.classList.add("uncertain");
      label.title =
        `second most likely parent: ${uncertain.second_parent_label} ` +
        `(p=${uncertain.second_marginal.toFixed(3)}); current parent ` +
        `${uncertain.map_parent_label} has p=${uncertain.marginal.toFixed(3)}`;
    }
    item.appendChild(label);

    const kids = children.get(node) ?? [];
    if (kids.length > 0) {
      const toggle = document.createElement("button");
      toggle.className = "toggle";
      toggle.type = "button";
      toggle.textContent = "–";
      toggle.addEventListener("click", () => {
        const collapsed = item.classList.toggle("collapsed");
        toggle.textContent = collapsed ? "+" : "–";
      });
      item.insertBefore(toggle, label);
      const list = document.createElement("ul");
      for (const kid of kids) list.appendChild(build(kid));
      item.appendChild(list);
    }
    return item;
  };

  const root = document.createElement("ul");
  root.className = "tree";
  root.appendChild(build(0));
  container.appendChild(root);
}

// Parent assignment as rendered, read back from the DOM nesting; lets
// tests confirm the picture matches the service's MAP tree exactly.
export function domParents(container: HTMLElement): number[] {
  const nodes = container.querySelectorAll<HTMLElement>("span.node");
  const parents: number[] = [];
  nodes.forEach((span) => {
    const node = Number(span.dataset.node);
    if (node === 0) return;
    const parentItem = span.closest("li")?.parentElement?.closest("li");
    const parentSpan = parentItem?.querySelector<HTMLElement>(":scope > span.node");
    parents[node - 1] = parentSpan ? Number(parentSpan.dataset.node) : -1;
  });
  return parents;
}

export function redNodes(container: HTMLElement): number[] {
  const out: number[] = [];
  container
    .querySelectorAll<HTMLElement>("span.node.uncertain")
    .forEach((span) => out.push(Number(span.dataset.node)));
  return out.sort((a, b) => a - b);
}

export function renderMarginalTable(
  report: Report,
  pair: { i: number; j: number } | null,
  container: HTMLElement,
): void {
  container.textContent = "";
  if (!pair) return;
  const caption = document.createElement("p");
  caption.textContent =
    `parent candidates for "${report.labels[pair.j]}" ` +
    `(last asked about "${report.labels[pair.i]}")`;
  container.appendChild(caption);

  const table = document.createElement("table");
  table.className = "marginals";
  const header = table.insertRow();
  header.insertCell().textContent = "parent";
  header.insertCell().textContent = "P(edge)";
  report.labels.forEach((label, i) => {
    if (i === pair.j) return;
    const row = table.insertRow();
    row.insertCell().textContent = label;
    const cell = row.insertCell();
    cell.textContent = report.marginals[i][pair.j].toFixed(3);
    if (i === pair.i) row.className = "asked-pair";
  });
  container.appendChild(table);
}
