// Binary decoders for the service payloads: LGPC point clouds and
// LGRI range images, both little-endian.

export interface CloudData {
  count: number;
  xyz: Float32Array; // length 3 * count
  intensity: Float32Array; // length count
}

export interface RangeImageData {
  height: number;
  width: number;
  rMax: number;
  depth: Float32Array; // row-major height * width
  intensity: Float32Array;
}

export function b64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  const nodeBuffer = (globalThis as { Buffer?: { from(s: string, e: string): Uint8Array } }).Buffer;
  if (nodeBuffer !== undefined) {
    return new Uint8Array(nodeBuffer.from(b64, "base64"));
  }
  throw new Error("no base64 decoder available");
}

function magicOf(bytes: Uint8Array): string {
  return String.fromCharCode(bytes[0], bytes[1], bytes[2], bytes[3]);
}

export function parseCloud(bytes: Uint8Array): CloudData {
  if (bytes.length < 8 || magicOf(bytes) !== "LGPC") {
    throw new Error("not an LGPC point cloud blob");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const count = view.getUint32(4, true);
  if (bytes.length < 8 + count * 16) throw new Error("truncated LGPC payload");
  const xyz = new Float32Array(count * 3);
  const intensity = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    const off = 8 + i * 16;
    xyz[i * 3] = view.getFloat32(off, true);
    xyz[i * 3 + 1] = view.getFloat32(off + 4, true);
    xyz[i * 3 + 2] = view.getFloat32(off + 8, true);
    intensity[i] = view.getFloat32(off + 12, true);
  }
  return { count, xyz, intensity };
}

export function parseRangeImage(bytes: Uint8Array): RangeImageData {
  if (bytes.length < 12 || magicOf(bytes) !== "LGRI") {
    throw new Error("not an LGRI range image blob");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const height = view.getUint16(4, true);
  const width = view.getUint16(6, true);
  const rMax = view.getFloat32(8, true);
  const n = height * width;
  if (bytes.length < 12 + n * 8) throw new Error("truncated LGRI payload");
  const depth = new Float32Array(n);
  const intensity = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    depth[i] = view.getFloat32(12 + i * 4, true);
    intensity[i] = view.getFloat32(12 + n * 4 + i * 4, true);
  }
  return { height, width, rMax, depth, intensity };
}
