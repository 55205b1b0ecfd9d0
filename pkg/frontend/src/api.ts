/** Typed client for the segmentation service. All coordinates are voxel
 * (z, y, x); masks travel run-length encoded. */

import type { Rle } from "./rle.js";

export interface VolumeInfo {
  id: string;
  dims: number[]; // [d, h, w]
  spacing: number[];
  has_ground_truth: boolean;
}

export interface SegmentPoint {
  z: number;
  y: number;
  x: number;
  label: "foreground" | "background";
}

export interface SegmentResponse {
  mask_rle: Rle;
  shape: number[];
  crop_offset: number[];
  voxel_count: number;
  per_slice_counts: number[];
  prob_stats: { min: number; max: number; mean: number };
  dice?: number;
}

export interface ApiError {
  code: string;
  message: string;
}

export class ServiceClient {
  constructor(private baseUrl: string = "") {}

  private async check<T>(resp: Response): Promise<T> {
    if (!resp.ok) {
      let detail = `${resp.status}`;
      try {
        const body = (await resp.json()) as ApiError;
        detail = `${body.code}: ${body.message}`;
      } catch {
        // non-JSON error body; keep the status code
      }
      throw new Error(detail);
    }
    return (await resp.json()) as T;
  }

  async health(): Promise<{ status: string; model_loaded: boolean }> {
    return this.check(await fetch(`${this.baseUrl}/health`));
  }

  async volumeInfo(id: string): Promise<VolumeInfo> {
    return this.check(await fetch(`${this.baseUrl}/volumes/${id}`));
  }

  sliceUrl(id: string, axis: number, index: number, channel = 0): string {
    return `${this.baseUrl}/volumes/${id}/slice?axis=${axis}&index=${index}&channel=${channel}`;
  }

  async sliceMask(
    id: string,
    axis: number,
    index: number,
    kind: "gt" | "organ"
  ): Promise<{ rle: Rle; shape: number[] }> {
    return this.check(
      await fetch(
        `${this.baseUrl}/volumes/${id}/slice_mask?axis=${axis}&index=${index}&kind=${kind}`
      )
    );
  }

  async segment(id: string, points: SegmentPoint[]): Promise<SegmentResponse> {
    return this.check(
      await fetch(`${this.baseUrl}/volumes/${id}/segment`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ points }),
      })
    );
  }
}
