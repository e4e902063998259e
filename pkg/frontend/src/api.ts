// Typed client for the suggestion-loop service. The page is normally served
// by the service itself, so every path is same-origin relative; tests (or a
// cross-origin dev setup) set window.QUERYREC_BASE before the app starts.

export interface CatalogItem {
  item_id: number;
  title: string;
  category: number;
}

export interface Catalog {
  items: CatalogItem[];
  n_users: number;
}

export interface QueryChip {
  query_id: number;
  text: string;
  score: number;
}

export interface Suggestion {
  suggestion_id: string;
  fallback: boolean;
  queries: QueryChip[];
}

export interface RecommendedItem {
  item_id: number;
  title: string;
  category: number;
  score: number;
}

export interface Recommendation {
  query_id: number;
  items: RecommendedItem[];
}

declare global {
  interface Window {
    QUERYREC_BASE?: string;
  }
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const res = await fetch((window.QUERYREC_BASE ?? "") + path, init);
  if (!res.ok) {
    let detail = res.statusText;
    try {
      detail = ((await res.json()) as { error?: string }).error ?? detail;
    } catch {
      // error body was not JSON; keep the status text
    }
    throw new ApiError(res.status, detail);
  }
  return res.status === 204 ? (undefined as T) : ((await res.json()) as T);
}

function post(path: string, body: unknown): Promise<void> {
  return request<void>(path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
}

export const api = {
  catalog: (limit = 60) => request<Catalog>(`/catalog?limit=${limit}`),

  postEvent: (user: number, item: number, action: number, timestamp: number) =>
    post("/events", { user, item, action, timestamp }),

  suggest: (user: number) => request<Suggestion>(`/suggest?user=${user}`),

  answer: (user: number, suggestionId: string, clickedQuery: number) =>
    post("/feedback", {
      user,
      suggestion_id: suggestionId,
      clicked_query: clickedQuery,
    }),

  dismiss: (user: number, suggestionId: string) =>
    post("/feedback", { user, suggestion_id: suggestionId, ignored: true }),

  recommend: (user: number, query: number, k = 8) =>
    request<Recommendation>(`/recommend?user=${user}&query=${query}&k=${k}`),
};
