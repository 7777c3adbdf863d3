import { ApiClient } from "./api.js";
import { clampPose, pixelToPose, poseToPixel } from "./coords.js";
import type { EditCommand, ServiceConfig, SessionState } from "./types.js";

export interface HandleState {
  selected: boolean;
  /** Drag handle position in canvas pixels, kept consistent with theta. */
  handle: [number, number];
}

/** Client mirror of one editing session.
 *
 * Every displayed image is a server render; latents are never updated
 * optimistically. Continuous controls (drags, sliders) are debounced by
 * DEBOUNCE_MS and coalesce to the latest value, with at most one in-flight
 * request per session.
 */
export class EditorSession {
  static readonly DEBOUNCE_MS = 60;

  state!: SessionState;
  image = "";
  handles: HandleState[] = [];
  requestCount = 0;
  lastError: string | null = null;

  private pending: EditCommand | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private settleResolvers: (() => void)[] = [];
  /** Recently confirmed poses per object, newest last; drags snap to these.
   * Mapping pixels back to poses rounds in the last bit, so without the
   * snap a drag back to a handle's old position would not restore the exact
   * pose, and the re-render would not be pixel-identical. */
  private poseMemory = new Map<number, [number, number][]>();
  private static readonly SNAP_RADIUS_PX = 0.5;
  private static readonly POSE_MEMORY = 32;

  private constructor(
    private readonly api: ApiClient,
    public readonly config: ServiceConfig,
  ) {}

  static async connect(
    api: ApiClient,
    seed = 0,
    K?: number,
  ): Promise<EditorSession> {
    const config = await api.config();
    const session = new EditorSession(api, config);
    const payload = await api.createSession(seed, K);
    session.accept(payload.session, payload.image);
    return session;
  }

  get sessionId(): string {
    return this.state.session_id;
  }

  get side(): number {
    return this.config.image_side;
  }

  /** True when the service exposes a dynamics rollout for this model. */
  get hasDynamics(): boolean {
    return this.config.variant === "dynamic";
  }

  private accept(state: SessionState, image: string): void {
    this.state = state;
    this.image = image;
    this.handles = state.objects.map((o, k) => ({
      selected: this.handles[k]?.selected ?? false,
      handle: poseToPixel(
        (o.theta ?? o.theta_hat) as [number, number],
        this.side,
      ),
    }));
    state.objects.forEach((o, k) => {
      const pose = (o.theta ?? o.theta_hat) as [number, number];
      const mem = this.poseMemory.get(k) ?? [];
      if (!mem.some((p) => p[0] === pose[0] && p[1] === pose[1])) {
        mem.push([pose[0], pose[1]]);
        if (mem.length > EditorSession.POSE_MEMORY) mem.shift();
      }
      this.poseMemory.set(k, mem);
    });
  }

  /** Snap a drag target to a remembered confirmed pose when it lands within
   * half a pixel of that pose's handle position. */
  private snap(k: number, px: number, py: number): [number, number] | null {
    const mem = this.poseMemory.get(k) ?? [];
    for (let i = mem.length - 1; i >= 0; i--) {
      const pose = mem[i]!;
      const [hx, hy] = poseToPixel(pose, this.side);
      if (
        Math.abs(hx - px) <= EditorSession.SNAP_RADIUS_PX &&
        Math.abs(hy - py) <= EditorSession.SNAP_RADIUS_PX
      ) {
        return pose;
      }
    }
    return null;
  }

  /** Apply one discrete edit immediately (no debounce). */
  async edit(command: EditCommand): Promise<void> {
    this.requestCount += 1;
    const payload = await this.api.edit(this.sessionId, command);
    this.accept(payload.session, payload.image);
  }

  /** Route a drag event: moves the handle locally for feedback, schedules a
   * coalesced set_pose. On a server error the handle reverts to the last
   * confirmed pose. */
  drag(k: number, px: number, py: number): void {
    const handle = this.handles[k];
    if (!handle) throw new Error(`no object ${k}`);
    handle.handle = [px, py];
    let theta = this.snap(k, px, py);
    if (theta === null) {
      const [tx, ty] = pixelToPose(px, py, this.side);
      theta = [clampPose(tx), clampPose(ty)];
    }
    this.scheduleContinuous({ op: "set_pose", k, theta });
  }

  /** Route a slider change for one appearance latent vector. */
  setAppearance(k: number, z: number[]): void {
    this.scheduleContinuous({ op: "set_appearance", k, z });
  }

  setBackground(z0: number[]): void {
    this.scheduleContinuous({ op: "set_background", z0 });
  }

  /** Debounce then send, keeping only the newest command; if a request is
   * already in flight the newest command waits for it and replaces any
   * earlier waiter (latest wins). */
  private scheduleContinuous(command: EditCommand): void {
    this.pending = command;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.flush();
    }, EditorSession.DEBOUNCE_MS);
  }

  private async flush(): Promise<void> {
    if (this.inFlight || this.pending === null) return;
    const command = this.pending;
    this.pending = null;
    this.inFlight = true;
    this.requestCount += 1;
    try {
      const payload = await this.api.edit(this.sessionId, command);
      this.accept(payload.session, payload.image);
      this.lastError = null;
    } catch (e) {
      this.lastError = e instanceof Error ? e.message : String(e);
      this.revertHandles();
    } finally {
      this.inFlight = false;
    }
    if (this.pending !== null) {
      await this.flush();
    } else if (this.timer === null) {
      this.settleResolvers.splice(0).forEach((r) => r());
    }
  }

  private revertHandles(): void {
    this.state.objects.forEach((o, k) => {
      const handle = this.handles[k];
      if (handle) {
        handle.handle = poseToPixel(
          (o.theta ?? o.theta_hat) as [number, number],
          this.side,
        );
      }
    });
  }

  /** Resolves once no request is in flight, pending, or debouncing. */
  settled(): Promise<void> {
    if (!this.inFlight && this.pending === null && this.timer === null) {
      return Promise.resolve();
    }
    return new Promise((resolve) => this.settleResolvers.push(resolve));
  }

  async refresh(): Promise<void> {
    const payload = await this.api.getSession(this.sessionId);
    this.accept(payload.session, payload.image);
  }
}
