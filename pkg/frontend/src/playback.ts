import { MotionPayload } from "./types.js";

export interface Point {
  x: number;
  y: number;
}

export interface Segment {
  a: Point;
  b: Point;
}

/** Feature column offsets for the 5-joint layout (width 68). */
export const COL = {
  rootAngVel: 0,
  rootVelX: 1,
  rootVelZ: 2,
  rootHeight: 3,
  jointPos: 4,          // 15 columns: 5 joints x (x, y, z), root-local
  contacts: 64,         // 4 columns
};

export const JOINT_COUNT = 5;

/** Integrated world-frame root track: [x, z] per frame. */
export function rootTrack(frames: number[][]): Array<[number, number]> {
  const out: Array<[number, number]> = [];
  let x = 0, z = 0;
  for (const f of frames) {
    x += f[COL.rootVelX];
    z += f[COL.rootVelZ];
    out.push([x, z]);
  }
  return out;
}

/** Stick-figure segments for one frame in a frontal (x up-y) projection.
 * Joint positions come straight from the stored local-position slice. */
export function skeletonSegments(frames: number[][], index: number): Segment[] {
  const f = frames[Math.max(0, Math.min(index, frames.length - 1))];
  const rootY = f[COL.rootHeight];
  const joints: Point[] = [];
  for (let j = 0; j < JOINT_COUNT; j++) {
    const px = f[COL.jointPos + 3 * j];
    const py = f[COL.jointPos + 3 * j + 1];
    joints.push({ x: px, y: rootY + py });
  }
  const root = joints[0];
  const head: Point = { x: root.x, y: root.y + 0.35 };
  const segs: Segment[] = [{ a: root, b: head }];
  for (let j = 1; j < JOINT_COUNT; j++) {
    const origin = j <= 2 ? { x: root.x, y: root.y + 0.25 } : root;
    segs.push({ a: origin, b: joints[j] });
  }
  return segs;
}

/** Playback over a returned motion, with an optional ghost of the previous
 * result overlaid for before/after comparison. */
export class PlaybackState {
  frames: number[][];
  fps: number;
  current = 0;
  playing = false;
  ghost: number[][] | null = null;
  private accum = 0;

  constructor(motion: MotionPayload, ghost: MotionPayload | null = null) {
    this.frames = motion.frames;
    this.fps = motion.fps;
    this.ghost = ghost ? ghost.frames : null;
  }

  get length(): number {
    return this.frames.length;
  }

  seek(frame: number): void {
    if (this.length === 0) return;
    this.current = Math.max(0, Math.min(frame, this.length - 1));
  }

  /** Advance by wall-clock dt seconds, wrapping at the end. */
  tick(dt: number): void {
    if (!this.playing || this.length === 0) return;
    this.accum += dt * this.fps;
    const steps = Math.floor(this.accum);
    if (steps > 0) {
      this.accum -= steps;
      this.current = (this.current + steps) % this.length;
    }
  }

  /** Replace the motion, keeping the old one as the ghost overlay. */
  swapIn(motion: MotionPayload): void {
    this.ghost = this.frames;
    this.frames = motion.frames;
    this.fps = motion.fps;
    this.current = Math.min(this.current, this.frames.length - 1);
  }

  currentSegments(): Segment[] {
    return skeletonSegments(this.frames, this.current);
  }

  ghostSegments(): Segment[] | null {
    if (!this.ghost) return null;
    return skeletonSegments(this.ghost, Math.min(this.current, this.ghost.length - 1));
  }
}
