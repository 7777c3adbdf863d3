/** In-memory stand-in for the editing service.
 *
 * Implements the HTTP contract behind a FetchLike function: stateful
 * sessions, pure rendering (identical state yields an identical image
 * string), pinning on set_pose, 404/422 errors, and linear-motion rollouts.
 */

import type { FetchLike } from "../src/api.js";
import { poseToPixel } from "../src/coords.js";
import type { ObjectState, SessionState } from "../src/types.js";

const SIDE = 32;

interface FakeOptions {
  variant?: "general" | "dynamic";
  failEdits?: boolean;
  latencyQueue?: (() => void)[];
}

export class FakeService {
  sessions = new Map<string, SessionState>();
  editCalls = 0;
  totalCalls = 0;
  failEdits = false;
  private nextId = 0;
  private variant: string;

  constructor(opts: FakeOptions = {}) {
    this.variant = opts.variant ?? "dynamic";
    this.failEdits = opts.failEdits ?? false;
  }

  /** Deterministic render: a stable digest of everything that affects
   * pixels. Pure by construction. */
  render(s: SessionState): string {
    const visibleState = {
      z0: s.z0,
      objects: s.objects
        .filter((o) => o.visible)
        .map((o) => ({ z: o.z, theta: o.theta ?? o.theta_hat, s: o.scale_override })),
    };
    const text = JSON.stringify(visibleState);
    let hash = 0;
    for (let i = 0; i < text.length; i++) {
      hash = (hash * 31 + text.charCodeAt(i)) | 0;
    }
    return `png:${hash.toString(16)}:${text.length}`;
  }

  private newObject(seed: number): ObjectState {
    const r = (n: number) => Math.sin(seed * 131 + n * 17) * 0.8;
    return {
      z: [r(0), r(1)],
      theta_hat: [r(2), r(3)],
      theta: [r(2), r(3)],
      visible: true,
      scale_override: null,
      pinned: false,
    };
  }

  private createSession(seed: number, K: number | null): SessionState {
    const sid = `fake-${this.nextId++}`;
    const k = K ?? 2;
    const state: SessionState = {
      session_id: sid,
      seed,
      with_background: true,
      z0: [Math.sin(seed), Math.cos(seed)],
      objects: Array.from({ length: k }, (_, i) => this.newObject(seed + i)),
    };
    this.sessions.set(sid, state);
    return state;
  }

  private applyEdit(state: SessionState, command: Record<string, unknown>): void {
    const op = command.op as string;
    const k = command.k as number;
    const obj = () => {
      const o = state.objects[k];
      if (o === undefined) throw new Http(422, `no object ${k}`);
      return o;
    };
    switch (op) {
      case "set_pose": {
        const theta = command.theta as [number, number];
        if (!theta.every(Number.isFinite)) throw new Http(422, "pose must be finite");
        const o = obj();
        o.theta = [...theta];
        o.pinned = true;
        break;
      }
      case "set_appearance":
        obj().z = [...(command.z as number[])];
        break;
      case "resample_appearance":
        obj().z = obj().z.map((v) => Math.sin(v * 997 + 1));
        break;
      case "set_background":
        state.z0 = [...(command.z0 as number[])];
        break;
      case "resample_background":
        state.z0 = state.z0.map((v) => Math.sin(v * 997 + 1));
        break;
      case "add_object":
        state.objects.push(this.newObject(state.seed + state.objects.length + 50));
        break;
      case "remove_object":
        obj();
        state.objects.splice(k, 1);
        break;
      case "toggle_visible":
        obj().visible = !obj().visible;
        break;
      case "set_scale": {
        const side = command.window_side as number;
        if (side < 1 || side > 16) throw new Http(422, "window side out of range");
        obj().scale_override = side;
        break;
      }
      default:
        throw new Http(422, `unknown op ${op}`);
    }
  }

  private rollout(state: SessionState, frames: number) {
    if (this.variant !== "dynamic") throw new Http(422, "model has no dynamics module");
    if (frames < 1) throw new Http(422, "frames must be >= 1");
    const poses: number[][][] = [];
    for (let t = 0; t < frames; t++) {
      poses.push(
        state.objects.map((o, i) => {
          const base = o.theta ?? o.theta_hat;
          return [base[0]! + 0.01 * t * (i + 1), base[1]! - 0.01 * t];
        }),
      );
    }
    return {
      frames: poses.map((p) => `png:frame:${JSON.stringify(p)}`),
      poses,
      pixel_centers: poses.map((p) =>
        p.map((xy) => poseToPixel(xy as [number, number], SIDE)),
      ),
    };
  }

  fetch: FetchLike = async (url, init) => {
    this.totalCalls += 1;
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(init.body) : {};
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    try {
      return ok(this.route(method, path, body));
    } catch (e) {
      if (e instanceof Http) return err(e.status, e.message);
      throw e;
    }
  };

  private route(method: string, path: string, body: Record<string, unknown>): unknown {
    if (method === "GET" && path === "/config") {
      return {
        model: { N_b: 2, N_f: 2, K_min: 2, K_max: 2, variant: this.variant, clip_len: 3 },
        step: 0,
        image_side: SIDE,
        variant: this.variant,
      };
    }
    if (method === "POST" && path === "/sessions") {
      const state = this.createSession((body.seed as number) ?? 0, (body.K as number) ?? null);
      return { session: structuredClone(state), image: this.render(state) };
    }
    const m = path.match(/^\/sessions\/([^/]+)(\/.*)?$/);
    if (m) {
      const state = this.sessions.get(m[1]!);
      if (!state) throw new Http(404, `unknown session ${m[1]}`);
      const sub = m[2] ?? "";
      if (method === "GET" && sub === "") {
        return { session: structuredClone(state), image: this.render(state) };
      }
      if (method === "DELETE" && sub === "") {
        this.sessions.delete(m[1]!);
        return { deleted: m[1] };
      }
      if (method === "POST" && sub === "/edit") {
        this.editCalls += 1;
        if (this.failEdits) throw new Http(500, "injected failure");
        this.applyEdit(state, body.command as Record<string, unknown>);
        return { session: structuredClone(state), image: this.render(state) };
      }
      if (method === "GET" && sub === "/components") {
        return {
          background: "png:background",
          components: state.objects.map((o, i) => `png:solo:${i}:${JSON.stringify(o.z)}`),
          composite: this.render(state),
          pixel_centers: state.objects.map((o) =>
            poseToPixel((o.theta ?? o.theta_hat) as [number, number], SIDE),
          ),
          session: structuredClone(state),
        };
      }
      if (method === "POST" && sub === "/rollout") {
        return this.rollout(state, body.frames as number);
      }
    }
    throw new Http(404, `no route ${method} ${path}`);
  }
}

class Http extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

function ok(data: unknown) {
  return { ok: true, status: 200, json: async () => data };
}

function err(status: number, detail: string) {
  return { ok: false, status, json: async () => ({ detail }) };
}
