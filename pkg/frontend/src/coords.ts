/** Pose-to-canvas coordinate mapping.
 *
 * Mirrors the server: a pose of +1 along an axis gathers content from one
 * half-image away, so the object's centre lands at (side-1)/2 - theta*side/2
 * pixels. Both directions are exact inverses of each other.
 */

export function poseToPixel(
  theta: [number, number],
  side: number,
): [number, number] {
  const c = (side - 1) / 2;
  return [c - theta[0] * (side / 2), c - theta[1] * (side / 2)];
}

export function pixelToPose(
  px: number,
  py: number,
  side: number,
): [number, number] {
  const c = (side - 1) / 2;
  return [(c - px) / (side / 2), (c - py) / (side / 2)];
}

/** Clamp a pose component into the renderable [-1, 1] band. */
export function clampPose(v: number): number {
  return Math.min(1, Math.max(-1, v));
}
