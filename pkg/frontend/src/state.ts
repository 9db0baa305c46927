/** Operator query state and its URL serialization.
 *
 * The state round-trips through the query string losslessly: JavaScript
 * number-to-string conversion is exact for doubles, so serialize(parse(s))
 * reproduces the same numbers bit for bit.
 */

export interface QueryState {
  rate: number;
  threshold: number;
  target: number;
}

export const DEFAULT_TARGET = 0.9;

export function serializeState(state: QueryState): string {
  const qs = new URLSearchParams();
  qs.set("r", String(state.rate));
  qs.set("h", String(state.threshold));
  qs.set("target", String(state.target));
  return qs.toString();
}

export function parseState(query: string, fallback: QueryState): QueryState {
  const qs = new URLSearchParams(query.startsWith("?") ? query.slice(1) : query);
  const num = (key: string, dflt: number) => {
    const raw = qs.get(key);
    if (raw === null) return dflt;
    const val = Number(raw);
    return Number.isFinite(val) ? val : dflt;
  };
  return {
    rate: num("r", fallback.rate),
    threshold: num("h", fallback.threshold),
    target: num("target", fallback.target),
  };
}

/** Clamp the state into the domains reported by the service. */
export function clampState(state: QueryState, w: number, headRange: [number, number]): QueryState {
  const clamp = (v: number, lo: number, hi: number) => Math.min(Math.max(v, lo), hi);
  return {
    rate: clamp(state.rate, 0, w),
    threshold: clamp(state.threshold, headRange[0], headRange[1]),
    target: clamp(state.target, 0.01, 0.99),
  };
}
