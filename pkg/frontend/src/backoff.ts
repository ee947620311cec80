// Reconnect pacing: exponential from 250 ms, capped at 5 s.

export const BACKOFF_BASE_MS = 250;
export const BACKOFF_CAP_MS = 5000;

export function backoffDelayMs(attempt: number): number {
  const exp = BACKOFF_BASE_MS * 2 ** Math.max(attempt, 0);
  return Math.min(exp, BACKOFF_CAP_MS);
}
