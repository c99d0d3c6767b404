// State machine for one review session: items are presented strictly in the
// order the service assigned, one exposure each (no back-navigation), the
// timer restarts exactly when an item is displayed, and a response cannot be
// submitted without both a label and an integer confidence.

import { ApiClient } from "./api.js";
import type { ResponseBody, SessionItem, SessionPayload } from "./types.js";

export type Phase = "idle" | "item" | "submitting" | "done";

export interface ViewState {
  phase: Phase;
  sessionId: string | null;
  group: string | null;
  itemIndex: number;
  totalItems: number;
  item: SessionItem | null;
  classOptions: string[];
  selectedLabel: string | null;
  confidence: number | null;
  error: string | null;
}

export interface RunnerOptions {
  clock?: () => number; // milliseconds; performance.now in the browser
  sleep?: (ms: number) => Promise<void>;
  maxAttempts?: number; // per response, counting the first try
  retryDelaysMs?: number[];
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class SessionRunner {
  private session: SessionPayload | null = null;
  private index = 0;
  private shownAt = 0;
  private selectedLabel: string | null = null;
  private confidence: number | null = null;
  private phase: Phase = "idle";
  private error: string | null = null;
  private listeners: Array<(state: ViewState) => void> = [];

  private clock: () => number;
  private sleep: (ms: number) => Promise<void>;
  private maxAttempts: number;
  private retryDelaysMs: number[];

  constructor(
    private api: ApiClient,
    options: RunnerOptions = {},
  ) {
    this.clock = options.clock ?? (() => performance.now());
    this.sleep = options.sleep ?? defaultSleep;
    this.maxAttempts = options.maxAttempts ?? 5;
    this.retryDelaysMs = options.retryDelaysMs ?? [250, 500, 1000, 2000];
  }

  onChange(listener: (state: ViewState) => void): void {
    this.listeners.push(listener);
  }

  state(): ViewState {
    return {
      phase: this.phase,
      sessionId: this.session?.session_id ?? null,
      group: this.session?.group ?? null,
      itemIndex: this.index,
      totalItems: this.session?.items.length ?? 0,
      item: this.session?.items[this.index] ?? null,
      classOptions: this.session?.class_options ?? [],
      selectedLabel: this.selectedLabel,
      confidence: this.confidence,
      error: this.error,
    };
  }

  private emit(): void {
    const snapshot = this.state();
    for (const listener of this.listeners) listener(snapshot);
  }

  async start(participantId: string, group?: string): Promise<void> {
    if (this.phase !== "idle") return;
    this.session = await this.api.createSession(participantId, group);
    this.index = 0;
    this.phase = this.session.items.length > 0 ? "item" : "done";
    this.shownAt = this.clock(); // first item is on screen now
    this.emit();
  }

  selectLabel(label: string): void {
    if (this.phase !== "item") return;
    if (!this.session?.class_options.includes(label)) return;
    this.selectedLabel = label;
    this.emit();
  }

  setConfidence(value: number): void {
    if (this.phase !== "item") return;
    if (!Number.isInteger(value) || value < 1 || value > 7) return;
    this.confidence = value;
    this.emit();
  }

  canSubmit(): boolean {
    return this.phase === "item" && this.selectedLabel !== null && this.confidence !== null;
  }

  /**
   * Deliver the current response, retrying transient failures with the same
   * retained payload; a duplicate conflict after a lost acknowledgement
   * counts as delivered. Re-entrant calls while submitting are ignored.
   */
  async submit(): Promise<void> {
    if (!this.canSubmit() || this.session === null) return;
    const item = this.session.items[this.index];
    if (!item) return;

    const body: ResponseBody = {
      item_id: item.item_id,
      label: this.selectedLabel as string,
      confidence: this.confidence as number,
      elapsed_ms: Math.max(1, Math.round(this.clock() - this.shownAt)),
    };
    this.phase = "submitting"; // blocks duplicate submits client-side
    this.error = null;
    this.emit();

    let delivered = false;
    for (let attempt = 0; attempt < this.maxAttempts; attempt++) {
      try {
        await this.api.postResponse(this.session.session_id, body);
        delivered = true;
        break;
      } catch {
        const delay = this.retryDelaysMs[Math.min(attempt, this.retryDelaysMs.length - 1)];
        await this.sleep(delay ?? 250);
      }
    }
    if (!delivered) {
      // response retained; the reviewer can press submit again
      this.phase = "item";
      this.error = "could not reach the server; your answer is kept, try again";
      this.emit();
      return;
    }

    this.index += 1;
    this.selectedLabel = null;
    this.confidence = null;
    if (this.index >= this.session.items.length) {
      this.phase = "done";
    } else {
      this.phase = "item";
      this.shownAt = this.clock(); // next item is displayed from this instant
    }
    this.emit();
  }
}
