/** Browser bootstrap: service base URL from ?api=..., query state from the
 * URL fragment-free query string, state changes mirrored back with
 * history.replaceState so scenarios are shareable links. */

import { ApiClient } from "./api.js";
import { Dashboard } from "./app.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "http://127.0.0.1:8000";

const root = document.getElementById("dashboard");
if (!root) throw new Error("missing #dashboard element");

const dashboard = new Dashboard(root, new ApiClient(base), {
  onStateSerialized: (qs) => {
    const url = new URL(window.location.href);
    const merged = new URLSearchParams(qs);
    if (params.get("api")) merged.set("api", params.get("api")!);
    url.search = merged.toString();
    window.history.replaceState(null, "", url);
  },
});

void dashboard.init(window.location.search);
