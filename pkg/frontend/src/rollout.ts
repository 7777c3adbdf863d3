import { ApiClient } from "./api.js";
import type { RolloutPayload } from "./types.js";
import { EditorSession } from "./session.js";

/** Client-side scrubber over a single fetched rollout.
 *
 * The T-frame trajectory is requested once; scrubbing swaps frames locally
 * and overlays one pose cross per object per frame from the returned pose
 * lists, never from image analysis.
 */
export class RolloutScrubber {
  private data: RolloutPayload | null = null;
  frame = 0;

  constructor(
    private readonly api: ApiClient,
    private readonly session: EditorSession,
  ) {}

  async load(frames: number): Promise<void> {
    if (!this.session.hasDynamics) {
      throw new Error("model has no dynamics module");
    }
    this.data = await this.api.rollout(this.session.sessionId, frames);
    this.frame = 0;
  }

  get length(): number {
    return this.data?.frames.length ?? 0;
  }

  scrub(t: number): string {
    if (!this.data) throw new Error("rollout not loaded");
    if (t < 0 || t >= this.data.frames.length) {
      throw new Error(`frame ${t} out of range`);
    }
    this.frame = t;
    return this.data.frames[t]!;
  }

  /** Pose crosses for the current frame, in canvas pixels. */
  crosses(t = this.frame): [number, number][] {
    if (!this.data) throw new Error("rollout not loaded");
    const centers = this.data.pixel_centers[t];
    if (!centers) throw new Error(`frame ${t} out of range`);
    return centers;
  }

  /** Total number of crosses across the whole rollout. */
  crossCount(): number {
    if (!this.data) return 0;
    return this.data.pixel_centers.reduce((n, f) => n + f.length, 0);
  }
}
