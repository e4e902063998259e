// Single-page consultation loop: browse the catalog, click items (logged as
// events), ask for query suggestions, answer one chip or dismiss the card,
// and see the resulting recommendations. All business logic stays on the
// server; this file is DOM wiring around the API client. Requests of the
// same kind are serialized (at most one in flight), and HTTP failures
// surface as toasts instead of blocking the page.

import {
  api,
  ApiError,
  CatalogItem,
  QueryChip,
  RecommendedItem,
  Suggestion,
} from "./api.js";

const ACTION_CLICK = 1; // service action codes: 1 click, 2 purchase, 3 favor, 4 cart
const MAX_CHIPS = 4; // single consultation card never shows more

interface HistoryEntry {
  item: CatalogItem;
  timestamp: number;
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

export function createApp(root: HTMLElement): void {
  // -- state ----------------------------------------------------------------
  let user = 0;
  let catalog: CatalogItem[] = [];
  let history: HistoryEntry[] = [];
  let suggestion: Suggestion | null = null;
  let answered = false; // single round: locks the card once feedback is sent
  let recs: RecommendedItem[] = [];
  let recQueryText = "";

  // Client-side timestamps only ever move forward, so the server's
  // "events precede the decision" rule cannot be violated by a burst of
  // clicks inside one second. Never reset, even on user switch.
  let lastTs = 0;
  function nextTimestamp(): number {
    lastTs = Math.max(lastTs + 1, Math.floor(Date.now() / 1000));
    return lastTs;
  }

  // One in-flight request per action kind; later triggers of the same kind
  // queue behind the current one instead of racing it.
  const chains = new Map<string, Promise<void>>();
  function serialized(kind: string, work: () => Promise<void>): Promise<void> {
    const next = (chains.get(kind) ?? Promise.resolve())
      .then(work)
      .catch((e: unknown) => {
        toast(
          e instanceof ApiError
            ? `error ${e.status}: ${e.message}`
            : `error: ${String(e)}`,
        );
      });
    chains.set(kind, next);
    return next;
  }

  // -- scaffold ---------------------------------------------------------------
  root.textContent = "";

  const header = el("header");
  header.append(el("h1", undefined, "Query Consult"));
  const userSelect = el("select");
  userSelect.id = "user-select";
  const consultBtn = el("button", "primary", "Ask me something");
  consultBtn.id = "consult-btn";
  header.append(labelled("you are", userSelect), consultBtn);

  const catalogGrid = el("div", "grid");
  catalogGrid.id = "catalog";
  const catalogPane = el("section");
  catalogPane.append(el("h2", undefined, "Catalog"), catalogGrid);

  const card = el("div", "card");
  card.id = "consult-card";
  card.hidden = true;

  const recPanel = el("section");
  recPanel.id = "rec-panel";
  const recTitle = el("h2", undefined, "Recommendations");
  const recList = el("div", "rec-list");
  const recEmpty = el("p", "muted", "Answer the card to get recommendations.");
  recPanel.append(recTitle, recEmpty, recList);

  const rightPane = el("section", "right");
  rightPane.append(card, recPanel);

  const historyList = el("ul");
  const historyPane = el("aside");
  historyPane.id = "history";
  historyPane.append(el("h2", undefined, "Your activity"), historyList);

  const main = el("main");
  main.append(catalogPane, rightPane, historyPane);

  const toasts = el("div");
  toasts.id = "toasts";

  root.append(header, main, toasts);

  function labelled(text: string, control: HTMLElement): HTMLElement {
    const wrap = el("label", "field", text + " ");
    wrap.append(control);
    return wrap;
  }

  function toast(message: string): void {
    const t = el("div", "toast", message);
    toasts.append(t);
    setTimeout(() => t.remove(), 4000);
  }

  // -- rendering --------------------------------------------------------------
  function renderCatalog(): void {
    catalogGrid.textContent = "";
    for (const item of catalog) {
      const btn = el("button", "item-card");
      btn.dataset.itemId = String(item.item_id);
      btn.append(
        el("span", "title", item.title),
        el("span", "cat", `category ${item.category}`),
      );
      btn.addEventListener("click", () => onItemClick(item));
      catalogGrid.append(btn);
    }
  }

  function renderHistory(): void {
    historyList.textContent = "";
    for (const entry of [...history].reverse()) {
      const li = el("li");
      li.append(
        el("span", "title", entry.item.title),
        el("span", "muted", new Date(entry.timestamp * 1000).toLocaleTimeString()),
      );
      historyList.append(li);
    }
  }

  function renderCard(): void {
    card.textContent = "";
    card.hidden = suggestion === null;
    card.classList.toggle("locked", answered);
    if (!suggestion) return;

    const heading = suggestion.fallback
      ? "Popular right now — anything here?"
      : "Are you looking for…";
    card.append(el("h2", undefined, heading));

    const chipRow = el("div", "chips");
    for (const chip of suggestion.queries.slice(0, MAX_CHIPS)) {
      const btn = el("button", "chip", chip.text);
      btn.dataset.queryId = String(chip.query_id);
      btn.disabled = answered;
      btn.addEventListener("click", () => onChip(chip));
      chipRow.append(btn);
    }
    card.append(chipRow);

    if (answered) {
      card.append(el("p", "muted", "Thanks — answered."));
    } else {
      const dismiss = el("button", "ghost", "Not now");
      dismiss.id = "dismiss-btn";
      dismiss.addEventListener("click", onDismiss);
      card.append(dismiss);
    }
  }

  function renderRecs(): void {
    recList.textContent = "";
    recEmpty.hidden = recs.length > 0;
    recTitle.textContent = recQueryText
      ? `Because you wanted “${recQueryText}”`
      : "Recommendations";
    for (const item of recs) {
      const row = el("div", "rec-item");
      row.dataset.itemId = String(item.item_id);
      row.append(
        el("span", "title", item.title),
        el("span", "cat", `category ${item.category}`),
        el("span", "score", item.score.toFixed(3)),
      );
      recList.append(row);
    }
  }

  // -- interactions -------------------------------------------------------------
  function onItemClick(item: CatalogItem): void {
    const entry: HistoryEntry = { item, timestamp: nextTimestamp() };
    history.push(entry); // optimistic: shown immediately, rolled back on failure
    renderHistory();
    void serialized("event", async () => {
      try {
        await api.postEvent(user, item.item_id, ACTION_CLICK, entry.timestamp);
      } catch (e) {
        history = history.filter((h) => h !== entry);
        renderHistory();
        throw e;
      }
    });
  }

  function onConsult(): void {
    void serialized("suggest", async () => {
      const got = await api.suggest(user);
      suggestion = got;
      answered = false;
      renderCard();
    });
  }

  function onChip(chip: QueryChip): void {
    void serialized("feedback", async () => {
      if (!suggestion || answered) return; // card already spent this round
      const id = suggestion.suggestion_id;
      await api.answer(user, id, chip.query_id);
      answered = true;
      renderCard();
      // recommendations only ever follow a clicked-query answer
      const rec = await api.recommend(user, chip.query_id);
      recs = rec.items;
      recQueryText = chip.text;
      renderRecs();
    });
  }

  function onDismiss(): void {
    void serialized("feedback", async () => {
      if (!suggestion || answered) return;
      await api.dismiss(user, suggestion.suggestion_id);
      suggestion = null; // card closes; no recommendation request
      renderCard();
    });
  }

  function onUserChange(): void {
    user = Number(userSelect.value);
    // sessions live server-side per user; the view starts a fresh round
    history = [];
    suggestion = null;
    answered = false;
    recs = [];
    recQueryText = "";
    renderHistory();
    renderCard();
    renderRecs();
  }

  consultBtn.addEventListener("click", onConsult);
  userSelect.addEventListener("change", onUserChange);

  // -- boot ---------------------------------------------------------------------
  void serialized("catalog", async () => {
    const got = await api.catalog();
    catalog = got.items;
    userSelect.textContent = "";
    for (let u = 0; u < got.n_users; u++) {
      const opt = el("option", undefined, `user ${u}`);
      opt.value = String(u);
      userSelect.append(opt);
    }
    userSelect.value = String(user);
    renderCatalog();
    renderHistory();
    renderCard();
    renderRecs();
  });
}
