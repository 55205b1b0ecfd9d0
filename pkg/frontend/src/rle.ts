/** Run-length encoding of binary masks over the flattened z-major (C) order.
 *
 * Wire format: {size, counts} where counts alternate runs of zeros and ones,
 * starting with zeros (a mask beginning with ones gets a zero-length zero
 * run first). Matches the segmentation service byte for byte.
 */

export interface Rle {
  size: number;
  counts: number[];
}

export function rleDecode(rle: Rle): Uint8Array {
  const total = rle.counts.reduce((a, b) => a + b, 0);
  if (total !== rle.size) {
    throw new Error(`counts sum ${total} != size ${rle.size}`);
  }
  const out = new Uint8Array(rle.size);
  let pos = 0;
  let val = 0;
  for (const c of rle.counts) {
    if (val === 1) {
      out.fill(1, pos, pos + c);
    }
    pos += c;
    val ^= 1;
  }
  return out;
}

export function rleEncode(mask: ArrayLike<number>): Rle {
  const size = mask.length;
  const counts: number[] = [];
  if (size === 0) {
    return { size: 0, counts: [] };
  }
  let current = 0; // runs start with zeros
  let run = 0;
  for (let i = 0; i < size; i++) {
    const bit = mask[i] ? 1 : 0;
    if (bit === current) {
      run += 1;
    } else {
      counts.push(run);
      current = bit;
      run = 1;
    }
  }
  counts.push(run);
  return { size, counts };
}

export function countOnes(mask: Uint8Array): number {
  let n = 0;
  for (let i = 0; i < mask.length; i++) n += mask[i];
  return n;
}
