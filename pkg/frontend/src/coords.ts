/** Coordinate mapping between screen pixels, slice-plane cells, and voxels.
 *
 * Volumes are indexed (z, y, x) with dims = [d, h, w]. Slices:
 *   axis 0 (z): plane rows = y, cols = x  -> h x w image
 *   axis 1 (y): plane rows = z, cols = x  -> d x w image
 *   axis 2 (x): plane rows = z, cols = y  -> d x h image
 */

export type Axis = 0 | 1 | 2;

export interface Dims {
  d: number;
  h: number;
  w: number;
}

export interface Voxel {
  z: number;
  y: number;
  x: number;
}

/** Rows/cols of the 2D slice image for a given view axis. */
export function sliceShape(dims: Dims, axis: Axis): { rows: number; cols: number } {
  switch (axis) {
    case 0:
      return { rows: dims.h, cols: dims.w };
    case 1:
      return { rows: dims.d, cols: dims.w };
    case 2:
      return { rows: dims.d, cols: dims.h };
  }
}

/** Number of slices along the view axis. */
export function sliceCount(dims: Dims, axis: Axis): number {
  return axis === 0 ? dims.d : axis === 1 ? dims.h : dims.w;
}

/** Plane cell (row, col) on slice `index` -> voxel (z, y, x). */
export function planeToVoxel(axis: Axis, index: number, row: number, col: number): Voxel {
  switch (axis) {
    case 0:
      return { z: index, y: row, x: col };
    case 1:
      return { z: row, y: index, x: col };
    case 2:
      return { z: row, y: col, x: index };
  }
}

/** Voxel -> (slice index, row, col) in the given view axis. */
export function voxelToPlane(
  axis: Axis,
  v: Voxel
): { index: number; row: number; col: number } {
  switch (axis) {
    case 0:
      return { index: v.z, row: v.y, col: v.x };
    case 1:
      return { index: v.y, row: v.z, col: v.x };
    case 2:
      return { index: v.x, row: v.z, col: v.y };
  }
}

/** Screen pixel inside the canvas -> plane cell, or null when outside.
 * The slice image is stretched to canvasWidth x canvasHeight. */
export function screenToPlane(
  px: number,
  py: number,
  canvasWidth: number,
  canvasHeight: number,
  rows: number,
  cols: number
): { row: number; col: number } | null {
  if (px < 0 || py < 0 || px >= canvasWidth || py >= canvasHeight) {
    return null;
  }
  const col = Math.floor((px / canvasWidth) * cols);
  const row = Math.floor((py / canvasHeight) * rows);
  if (row < 0 || row >= rows || col < 0 || col >= cols) {
    return null;
  }
  return { row, col };
}

/** Plane cell -> screen pixel at the cell center. */
export function planeToScreen(
  row: number,
  col: number,
  canvasWidth: number,
  canvasHeight: number,
  rows: number,
  cols: number
): { px: number; py: number } {
  return {
    px: ((col + 0.5) / cols) * canvasWidth,
    py: ((row + 0.5) / rows) * canvasHeight,
  };
}

/** Flat index of a voxel in the z-major (C order) flattened volume. */
export function voxelFlatIndex(dims: Dims, v: Voxel): number {
  return (v.z * dims.h + v.y) * dims.w + v.x;
}

/** Extract one slice of a flattened z-major mask as a rows x cols plane. */
export function extractSlice(
  mask: Uint8Array,
  dims: Dims,
  axis: Axis,
  index: number
): Uint8Array {
  const { rows, cols } = sliceShape(dims, axis);
  const out = new Uint8Array(rows * cols);
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const v = planeToVoxel(axis, index, r, c);
      out[r * cols + c] = mask[voxelFlatIndex(dims, v)];
    }
  }
  return out;
}
