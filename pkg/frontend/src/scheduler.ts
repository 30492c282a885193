/**
 * Latest-wins frame scheduler.
 *
 * Interaction events arrive much faster than the server can render, so the
 * scheduler keeps only the newest request, waits out a short debounce window,
 * and never has more than one request in flight. When a response lands and a
 * newer request accumulated meanwhile, that one is issued immediately (no
 * second debounce) so the view settles on the latest pose.
 */

export interface SchedulerHooks<Req, Res> {
  send: (req: Req) => Promise<Res>;
  onFrame: (res: Res, req: Req) => void;
  /** Called when a request fails; the previous frame stays visible. */
  onError?: (err: unknown, req: Req) => void;
}

export class FrameScheduler<Req, Res> {
  private pending: Req | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private sent = 0;

  constructor(
    private hooks: SchedulerHooks<Req, Res>,
    private debounceMs = 50,
  ) {}

  /** Number of requests actually sent to the server (for tests/overlay). */
  get requestsSent(): number {
    return this.sent;
  }

  get busy(): boolean {
    return this.inFlight || this.pending !== null;
  }

  request(req: Req): void {
    this.pending = req;
    if (this.inFlight) return; // picked up on completion
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.issue();
    }, this.debounceMs);
  }

  private async issue(): Promise<void> {
    const req = this.pending;
    if (req === null || this.inFlight) return;
    this.pending = null;
    this.inFlight = true;
    this.sent++;
    try {
      const res = await this.hooks.send(req);
      this.hooks.onFrame(res, req);
    } catch (err) {
      this.hooks.onError?.(err, req);
    } finally {
      this.inFlight = false;
      if (this.pending !== null) void this.issue();
    }
  }
}
