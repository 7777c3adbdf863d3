/** Shared payload shapes of the scene-editing HTTP API. */

export interface ObjectState {
  z: number[];
  theta_hat: number[];
  theta: number[] | null;
  visible: boolean;
  scale_override: number | null;
  pinned: boolean;
}

export interface SessionState {
  session_id: string;
  seed: number;
  with_background: boolean;
  z0: number[];
  objects: ObjectState[];
}

/** Session JSON plus the server render of that exact state. */
export interface SessionPayload {
  session: SessionState;
  image: string;
}

export interface ServiceConfig {
  model: {
    N_b: number;
    N_f: number;
    K_min: number;
    K_max: number;
    variant: string;
    clip_len: number;
    scale_enabled?: boolean;
    [key: string]: unknown;
  };
  step: number;
  image_side: number;
  variant: string;
}

export interface ComponentsPayload {
  background: string;
  components: string[];
  composite: string;
  pixel_centers: [number, number][];
  session: SessionState;
}

export interface RolloutPayload {
  frames: string[];
  poses: number[][][];
  pixel_centers: [number, number][][];
}

export type EditCommand =
  | { op: "set_pose"; k: number; theta: [number, number] }
  | { op: "set_appearance"; k: number; z: number[] }
  | { op: "resample_appearance"; k: number }
  | { op: "set_background"; z0: number[] }
  | { op: "resample_background" }
  | { op: "add_object" }
  | { op: "remove_object"; k: number }
  | { op: "toggle_visible"; k: number }
  | { op: "set_scale"; k: number; window_side: number };
