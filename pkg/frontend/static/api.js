// Typed client for the suggestion-loop service. The page is normally served
// by the service itself, so every path is same-origin relative; tests (or a
// cross-origin dev setup) set window.QUERYREC_BASE before the app starts.
export class ApiError extends Error {
    constructor(status, message) {
        super(message);
        this.status = status;
    }
}
async function request(path, init) {
    const res = await fetch((window.QUERYREC_BASE ?? "") + path, init);
    if (!res.ok) {
        let detail = res.statusText;
        try {
            detail = (await res.json()).error ?? detail;
        }
        catch {
            // error body was not JSON; keep the status text
        }
        throw new ApiError(res.status, detail);
    }
    return res.status === 204 ? undefined : (await res.json());
}
function post(path, body) {
    return request(path, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
    });
}
export const api = {
    catalog: (limit = 60) => request(`/catalog?limit=${limit}`),
    postEvent: (user, item, action, timestamp) => post("/events", { user, item, action, timestamp }),
    suggest: (user) => request(`/suggest?user=${user}`),
    answer: (user, suggestionId, clickedQuery) => post("/feedback", {
        user,
        suggestion_id: suggestionId,
        clicked_query: clickedQuery,
    }),
    dismiss: (user, suggestionId) => post("/feedback", { user, suggestion_id: suggestionId, ignored: true }),
    recommend: (user, query, k = 8) => request(`/recommend?user=${user}&query=${query}&k=${k}`),
};
