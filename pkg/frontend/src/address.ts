// Address page: anonymity score, mixer stats, and the pivotable table of
// linked addresses. Every number shown comes straight from the payload.

import { clear, el } from "./dom.js";
import type { AddressSummary, LinkedAddress } from "./types.js";

export interface AddressPageHooks {
  onPivot: (addr: string) => void;
}

type SortKey = keyof Pick<LinkedAddress, "addr" | "type" | "kappa" | "heuristic">;

const COLUMNS: { key: SortKey; label: string }[] = [
  { key: "addr", label: "Address" },
  { key: "type", label: "Type" },
  { key: "kappa", label: "Confidence" },
  { key: "heuristic", label: "Heuristic" },
];

export function renderAddressPage(
  container: HTMLElement,
  summary: AddressSummary,
  hooks: AddressPageHooks,
): void {
  clear(container);

  const score = el("div", { class: "score-panel" }, [
    el("div", { class: "score-value", "data-testid": "score" },
       [String(summary.score_display)]),
    el("div", { class: "score-caption" }, ["anonymity score out of 100"]),
    el("div", { class: "score-addr" }, [summary.addr]),
  ]);

  const stats = summary.tornado_stats;
  const statsPanel = el("div", { class: "stats-panel" }, [
    statBox("deposits", stats.deposit_count),
    statBox("withdrawals", stats.withdraw_count),
    statBox("linked withdrawals", stats.linked_withdraw_count),
  ]);

  const linkedPanel = el("div", { class: "linked-panel" }, [
    el("h2", {}, ["Linked Addresses"]),
  ]);
  if (summary.linked_addresses.length === 0) {
    linkedPanel.append(
      el("p", { class: "empty-state", "data-testid": "no-linked" },
         ["No linked addresses found."]),
    );
  } else {
    linkedPanel.append(buildTable(summary.linked_addresses, hooks));
  }

  container.append(score, statsPanel, linkedPanel);
}

function statBox(label: string, value: number): HTMLElement {
  return el("div", { class: "stat-box" }, [
    el("div", { class: "stat-value" }, [String(value)]),
    el("div", { class: "stat-label" }, [label]),
  ]);
}

function buildTable(rows: LinkedAddress[], hooks: AddressPageHooks): HTMLElement {
  const table = el("table", { class: "linked-table", "data-testid": "linked-table" });
  const head = el("tr");
  const body = el("tbody");
  let sortKey: SortKey = "kappa";
  let descending = true;

  const renderBody = () => {
    clear(body);
    const ordered = [...rows].sort((a, b) => {
      const left = a[sortKey];
      const right = b[sortKey];
      const cmp = typeof left === "number" && typeof right === "number"
        ? left - right
        : String(left).localeCompare(String(right));
      return descending ? -cmp : cmp;
    });
    for (const row of ordered) {
      const link = el("a", { href: "#", class: "pivot-link", "data-addr": row.addr },
                      [row.addr]);
      link.addEventListener("click", (event) => {
        event.preventDefault();
        hooks.onPivot(row.addr);
      });
      body.append(el("tr", { class: "linked-row" }, [
        el("td", {}, [link]),
        el("td", {}, [row.type]),
        el("td", {}, [row.kappa.toFixed(4)]),
        el("td", {}, [row.heuristic]),
      ]));
    }
  };

  for (const column of COLUMNS) {
    const th = el("th", { "data-sort": column.key }, [column.label]);
    th.addEventListener("click", () => {
      if (sortKey === column.key) {
        descending = !descending;
      } else {
        sortKey = column.key;
        descending = column.key === "kappa";
      }
      renderBody();
    });
    head.append(th);
  }

  renderBody();
  table.append(el("thead", {}, [head]), body);
  return table;
}
