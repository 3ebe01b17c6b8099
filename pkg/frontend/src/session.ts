// Review-session state machine, kept free of DOM so it can be driven
// headlessly. The service owns all durable state; reloading the page only
// loses the in-memory counters.

import {
  ApiClient,
  PrecisionPendingError,
  PrecisionReport,
  PrecisionUnavailable,
  QueueItem,
} from "./api.js";

export const CONGRUENT = "congruent";
export const INCONGRUENT = "incongruent";

// Curve depths requested from the service; only those already covered by
// labels are asked for, the rest are reported as pending.
export const CURVE_KS = [5, 10, 20, 30, 50, 100, 200];

const FETCH_BATCH = 20;

export interface SessionState {
  annotator: string;
  item: QueueItem | null;
  remaining: number; // items still buffered locally beyond the current one
  labeled: number;
  exhausted: boolean;
  offline: boolean;
  pendingLabel: string | null; // decision that failed to post; retried on demand
  curve: PrecisionReport | null;
  curvePending: PrecisionUnavailable | null;
  pendingKs: number[]; // depths not yet computable
}

export class ReviewSession {
  private buffer: QueueItem[] = [];
  readonly state: SessionState;

  constructor(
    private api: ApiClient,
    annotator: string,
    private onChange: (state: SessionState) => void = () => {},
    private rule: string = "unanimous",
  ) {
    this.state = {
      annotator,
      item: null,
      remaining: 0,
      labeled: 0,
      exhausted: false,
      offline: false,
      pendingLabel: null,
      curve: null,
      curvePending: null,
      pendingKs: CURVE_KS.slice(),
    };
  }

  private emit(): void {
    this.state.remaining = this.buffer.length;
    this.onChange(this.state);
  }

  async start(): Promise<void> {
    await this.advance();
    await this.refreshCurve();
    this.emit();
  }

  /** Retry whatever failed last: a pending decision, or loading the queue. */
  async retry(): Promise<void> {
    this.state.offline = false;
    if (this.state.pendingLabel !== null) {
      await this.decide(this.state.pendingLabel);
    } else {
      await this.start();
    }
  }

  async decide(label: string): Promise<void> {
    const item = this.state.item;
    if (!item) return;
    try {
      await this.api.submitLabel(item.sample_id, this.state.annotator, label);
    } catch {
      // The decision is never dropped silently: the item stays current and
      // the label is kept for retry behind a blocking banner.
      this.state.offline = true;
      this.state.pendingLabel = label;
      this.emit();
      return;
    }
    this.state.offline = false;
    this.state.pendingLabel = null;
    this.state.labeled += 1;
    await this.advance();
    await this.refreshCurve();
    this.emit();
  }

  private async advance(): Promise<void> {
    if (this.buffer.length === 0) {
      try {
        this.buffer = await this.api.getQueue(this.state.annotator, FETCH_BATCH);
      } catch {
        this.state.offline = true;
        this.emit();
        return;
      }
    }
    this.state.item = this.buffer.shift() ?? null;
    this.state.exhausted = this.state.item === null;
  }

  async refreshCurve(): Promise<void> {
    const ready = CURVE_KS.filter((k) => k <= this.state.labeled);
    this.state.pendingKs = CURVE_KS.filter((k) => k > this.state.labeled);
    if (ready.length === 0) {
      this.state.curve = null;
      this.state.curvePending = null;
      return;
    }
    try {
      this.state.curve = await this.api.getPrecision(ready, this.rule);
      this.state.curvePending = null;
    } catch (err) {
      if (err instanceof PrecisionPendingError) {
        // Another annotator's disagreements (or gaps) can block depths we
        // expected to be ready; surface them instead of a curve.
        this.state.curvePending = err.detail;
        this.state.curve = null;
      }
      // Network errors leave the previous curve in place; the next
      // successful decision refreshes it.
    }
  }
}
