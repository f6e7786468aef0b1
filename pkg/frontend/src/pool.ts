// Pool auditor page: pool dropdown, audit numbers, and the private
// compromise check form.

import { clear, el } from "./dom.js";
import type { PoolAudit, PoolInfo } from "./types.js";

export function renderPoolOptions(select: HTMLSelectElement,
                                  pools: PoolInfo[]): void {
  clear(select);
  select.append(el("option", { value: "" }, ["select a pool"]));
  for (const pool of pools) {
    select.append(el("option", { value: pool.pool_id }, [
      `${pool.pool_id} (${pool.total_deposits} deposits)`,
    ]));
  }
}

export function renderAudit(container: HTMLElement, audit: PoolAudit): void {
  clear(container);
  container.append(
    el("h2", {}, [audit.pool_id]),
    auditRow("equal user deposits", audit.total_deposits, "total-deposits"),
    auditRow("potentially compromised", audit.compromised_deposits, "compromised"),
    auditRow("true anonymity set", audit.true_anonymity_set, "true-set"),
  );
}

function auditRow(label: string, value: number, testid: string): HTMLElement {
  return el("div", { class: "audit-row" }, [
    el("span", { class: "audit-value", "data-testid": testid }, [String(value)]),
    el("span", { class: "audit-label" }, [label]),
  ]);
}

export function renderVerdict(container: HTMLElement,
                              state: "compromised" | "clean" | "error"): void {
  clear(container);
  const text = {
    compromised: "This address has made potentially compromising transactions.",
    clean: "No compromising transactions found for this address.",
    error: "Check failed; please retry.",
  }[state];
  container.append(
    el("p", { class: `verdict verdict-${state}`, "data-testid": "verdict" }, [text]),
  );
}
