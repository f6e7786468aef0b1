// Application shell: three pages (address, transactions, pool), a shared
// search box, and per-page query tokens so a stale response never
// overwrites a newer one. At most one request per page is applied at a
// time; superseded responses are discarded.

import { renderAddressPage } from "./address.js";
import { ApiClient, NetworkError } from "./api.js";
import { checkAddressPrivately } from "./check.js";
import { clear, el } from "./dom.js";
import { renderAudit, renderPoolOptions, renderVerdict } from "./pool.js";
import { renderTimeline } from "./timeline.js";

type Page = "address" | "transactions" | "pool";

export interface AppHandles {
  root: HTMLElement;
  searchAddress: (addr: string) => Promise<void>;
  searchTimeline: (addr: string) => Promise<void>;
  selectPool: (poolId: string) => Promise<void>;
  checkAddress: (addr: string) => Promise<void>;
  setPage: (page: Page) => void;
}

export function createApp(root: HTMLElement, api: ApiClient): AppHandles {
  const tokens: Record<Page, number> = { address: 0, transactions: 0, pool: 0 };

  const banner = el("div", { class: "error-banner hidden", "data-testid": "banner" });
  const searchInput = el("input", {
    class: "search-input",
    placeholder: "0x address",
    "data-testid": "search-input",
  });
  const searchButton = el("button", { class: "search-button" }, ["Search"]);

  const pages: Record<Page, HTMLElement> = {
    address: el("section", { class: "page page-address", "data-testid": "page-address" }),
    transactions: el("section", {
      class: "page page-transactions hidden",
      "data-testid": "page-transactions",
    }),
    pool: el("section", { class: "page page-pool hidden", "data-testid": "page-pool" }),
  };

  const poolSelect = el("select", { class: "pool-select", "data-testid": "pool-select" });
  const auditPanel = el("div", { class: "audit-panel" });
  const checkInput = el("input", {
    class: "check-input",
    placeholder: "address to check privately",
    "data-testid": "check-input",
  });
  const checkButton = el("button", { class: "check-button" }, ["Check privately"]);
  const verdictPanel = el("div", { class: "verdict-panel" });
  pages.pool.append(
    poolSelect, auditPanel,
    el("div", { class: "check-form" }, [checkInput, checkButton]),
    verdictPanel,
  );

  let activePage: Page = "address";

  const tabs: Record<Page, HTMLButtonElement> = {
    address: el("button", { class: "tab tab-active", "data-tab": "address" }, ["Address"]),
    transactions: el("button", { class: "tab", "data-tab": "transactions" }, ["Transactions"]),
    pool: el("button", { class: "tab", "data-tab": "pool" }, ["Pool Auditor"]),
  };

  function setPage(page: Page): void {
    activePage = page;
    for (const [name, section] of Object.entries(pages)) {
      section.classList.toggle("hidden", name !== page);
      tabs[name as Page].classList.toggle("tab-active", name === page);
    }
    hideBanner();
    if (page === "pool" && poolSelect.options.length === 0) {
      void loadPools();
    }
  }

  function showBanner(message: string): void {
    banner.textContent = message;
    banner.classList.remove("hidden");
  }

  function hideBanner(): void {
    banner.classList.add("hidden");
  }

  function describeError(error: unknown): string {
    if (error instanceof NetworkError) {
      return "Network unavailable; please retry.";
    }
    return error instanceof Error ? error.message : String(error);
  }

  async function searchAddress(addr: string): Promise<void> {
    const token = ++tokens.address;
    try {
      const summary = await api.addressSummary(addr.trim().toLowerCase());
      if (token !== tokens.address) return; // superseded by a newer query
      hideBanner();
      renderAddressPage(pages.address, summary, { onPivot: pivot });
    } catch (error) {
      if (token !== tokens.address) return;
      showBanner(describeError(error)); // the query stays in the input
    }
  }

  function pivot(addr: string): void {
    searchInput.value = addr;
    setPage("address");
    void searchAddress(addr);
  }

  async function searchTimeline(addr: string): Promise<void> {
    const token = ++tokens.transactions;
    try {
      const timeline = await api.revealTimeline(addr.trim().toLowerCase());
      if (token !== tokens.transactions) return;
      hideBanner();
      renderTimeline(pages.transactions, timeline);
    } catch (error) {
      if (token !== tokens.transactions) return;
      showBanner(describeError(error));
    }
  }

  async function loadPools(): Promise<void> {
    try {
      renderPoolOptions(poolSelect, await api.pools());
    } catch (error) {
      showBanner(describeError(error));
    }
  }

  async function selectPool(poolId: string): Promise<void> {
    if (!poolId) return;
    const token = ++tokens.pool;
    try {
      const audit = await api.poolAudit(poolId);
      if (token !== tokens.pool) return;
      hideBanner();
      renderAudit(auditPanel, audit);
    } catch (error) {
      if (token !== tokens.pool) return;
      showBanner(describeError(error));
    }
  }

  async function checkAddress(addr: string): Promise<void> {
    try {
      const compromised = await checkAddressPrivately(api, addr);
      renderVerdict(verdictPanel, compromised ? "compromised" : "clean");
    } catch {
      renderVerdict(verdictPanel, "error");
    }
  }

  searchButton.addEventListener("click", () => {
    const addr = searchInput.value;
    if (activePage === "transactions") {
      void searchTimeline(addr);
    } else {
      setPage("address");
      void searchAddress(addr);
    }
  });
  searchInput.addEventListener("keydown", (event) => {
    if ((event as KeyboardEvent).key === "Enter") searchButton.click();
  });
  for (const [name, tab] of Object.entries(tabs)) {
    tab.addEventListener("click", () => setPage(name as Page));
  }
  poolSelect.addEventListener("change", () => void selectPool(poolSelect.value));
  checkButton.addEventListener("click", () => void checkAddress(checkInput.value));

  clear(root);
  root.append(
    el("header", { class: "app-header" }, [
      el("h1", {}, ["Tutela Explorer"]),
      el("nav", { class: "tabs" }, [tabs.address, tabs.transactions, tabs.pool]),
      el("div", { class: "search-bar" }, [searchInput, searchButton]),
    ]),
    banner,
    pages.address,
    pages.transactions,
    pages.pool,
  );

  return { root, searchAddress, searchTimeline, selectPool, checkAddress, setPage };
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) {
    createApp(root, new ApiClient());
  }
}
