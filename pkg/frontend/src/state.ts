/** UI state for the interactive point-prompt session.
 *
 * Holds the current view (axis, slice index), the placed prompt points, and
 * the latest segmentation result. Request dispatch is "latest wins": while a
 * segment request is in flight, newer point edits queue a single follow-up
 * request and intermediate states are skipped.
 */

import type { Axis, Dims, Voxel } from "./coords.js";
import { sliceCount } from "./coords.js";
import type { SegmentPoint, SegmentResponse } from "./api.js";

export type PointLabel = "foreground" | "background";

export interface PlacedPoint extends Voxel {
  label: PointLabel;
}

export interface ViewState {
  axis: Axis;
  index: number;
  activeLabel: PointLabel;
  points: PlacedPoint[];
  result: SegmentResponse | null;
  error: string | null;
  busy: boolean;
}

export function initialState(dims: Dims): ViewState {
  return {
    axis: 0,
    index: Math.floor(sliceCount(dims, 0) / 2),
    activeLabel: "foreground",
    points: [],
    result: null,
    error: null,
    busy: false,
  };
}

export function placePoint(state: ViewState, v: Voxel): ViewState {
  return {
    ...state,
    points: [...state.points, { ...v, label: state.activeLabel }],
  };
}

export function undoPoint(state: ViewState): ViewState {
  if (state.points.length === 0) return state;
  return { ...state, points: state.points.slice(0, -1) };
}

export function clearPoints(state: ViewState): ViewState {
  return { ...state, points: [], result: null, error: null };
}

export function toggleLabel(state: ViewState): ViewState {
  return {
    ...state,
    activeLabel: state.activeLabel === "foreground" ? "background" : "foreground",
  };
}

export function setAxis(state: ViewState, dims: Dims, axis: Axis): ViewState {
  const n = sliceCount(dims, axis);
  return { ...state, axis, index: Math.min(state.index, n - 1) };
}

export function stepSlice(state: ViewState, dims: Dims, delta: number): ViewState {
  const n = sliceCount(dims, state.axis);
  const index = Math.min(n - 1, Math.max(0, state.index + delta));
  return { ...state, index };
}

export function toSegmentPoints(points: PlacedPoint[]): SegmentPoint[] {
  return points.map((p) => ({ z: p.z, y: p.y, x: p.x, label: p.label }));
}

/** Serializes segment requests so at most one is in flight; while busy,
 * only the most recent request is kept pending. */
export class RequestQueue {
  private inflight = false;
  private pending: (() => Promise<void>) | null = null;

  /** Submit a request thunk. Returns when this thunk (or the one that
   * superseded it) has been settled. */
  async submit(run: () => Promise<void>): Promise<void> {
    if (this.inflight) {
      this.pending = run;
      return;
    }
    this.inflight = true;
    try {
      await run();
    } finally {
      this.inflight = false;
    }
    const next = this.pending;
    this.pending = null;
    if (next) {
      await this.submit(next);
    }
  }

  get busy(): boolean {
    return this.inflight;
  }
}
