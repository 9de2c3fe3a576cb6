// Minimal PNG support for mask files.
//
// The encoder writes 8-bit grayscale with stored (uncompressed) deflate
// blocks, which every zlib reader accepts, so exports need no compression
// dependency. The decoder only reads files this encoder produced (plus the
// dimension probe, which works on any PNG); arbitrary PNGs from disk are
// decoded by the browser in app code, not here.

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

export function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32be(value: number): Uint8Array {
  return new Uint8Array([
    (value >>> 24) & 0xff,
    (value >>> 16) & 0xff,
    (value >>> 8) & 0xff,
    value & 0xff,
  ]);
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const typeBytes = new TextEncoder().encode(type);
  const body = new Uint8Array(typeBytes.length + data.length);
  body.set(typeBytes, 0);
  body.set(data, typeBytes.length);
  const out = new Uint8Array(4 + body.length + 4);
  out.set(u32be(data.length), 0);
  out.set(body, 4);
  out.set(u32be(crc32(body)), 4 + body.length);
  return out;
}

/** Wrap raw bytes in a zlib stream of stored deflate blocks. */
export function zlibStore(raw: Uint8Array): Uint8Array {
  const blocks: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  const max = 0xffff;
  let offset = 0;
  do {
    const len = Math.min(max, raw.length - offset);
    const last = offset + len >= raw.length ? 1 : 0;
    const header = new Uint8Array(5);
    header[0] = last;
    header[1] = len & 0xff;
    header[2] = (len >>> 8) & 0xff;
    header[3] = ~len & 0xff;
    header[4] = (~len >>> 8) & 0xff;
    blocks.push(header, raw.subarray(offset, offset + len));
    offset += len;
  } while (offset < raw.length);
  blocks.push(u32be(adler32(raw)));
  return concat(blocks);
}

function zlibUnstore(stream: Uint8Array): Uint8Array {
  if (stream.length < 6) throw new Error("zlib stream truncated");
  if ((stream[0] & 0x0f) !== 8) throw new Error("not a deflate stream");
  const parts: Uint8Array[] = [];
  let pos = 2;
  for (;;) {
    const header = stream[pos];
    if ((header & 0x06) !== 0) {
      throw new Error("compressed deflate blocks are not supported here");
    }
    const len = stream[pos + 1] | (stream[pos + 2] << 8);
    const nlen = stream[pos + 3] | (stream[pos + 4] << 8);
    if ((len ^ nlen) !== 0xffff) throw new Error("stored block length mismatch");
    pos += 5;
    parts.push(stream.subarray(pos, pos + len));
    pos += len;
    if (header & 1) break;
  }
  const raw = concat(parts);
  const expected = readU32be(stream, pos);
  if (adler32(raw) !== expected) throw new Error("zlib checksum mismatch");
  return raw;
}

function concat(parts: Uint8Array[]): Uint8Array {
  let total = 0;
  for (const p of parts) total += p.length;
  const out = new Uint8Array(total);
  let offset = 0;
  for (const p of parts) {
    out.set(p, offset);
    offset += p.length;
  }
  return out;
}

function readU32be(bytes: Uint8Array, offset: number): number {
  return (
    ((bytes[offset] << 24) |
      (bytes[offset + 1] << 16) |
      (bytes[offset + 2] << 8) |
      bytes[offset + 3]) >>>
    0
  );
}

/** Encode 8-bit grayscale pixels (row-major, length w*h) as a PNG file. */
export function encodeGray8(width: number, height: number, pixels: Uint8Array): Uint8Array {
  if (width < 1 || height < 1) throw new Error(`bad dims ${width}x${height}`);
  if (pixels.length !== width * height) {
    throw new Error(`expected ${width * height} pixels, got ${pixels.length}`);
  }
  const ihdr = new Uint8Array(13);
  ihdr.set(u32be(width), 0);
  ihdr.set(u32be(height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 0; // grayscale
  // compression, filter, interlace all zero

  const raw = new Uint8Array(height * (width + 1));
  for (let y = 0; y < height; y++) {
    raw[y * (width + 1)] = 0; // filter: none
    raw.set(pixels.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }

  return concat([
    new Uint8Array(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", zlibStore(raw)),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

export interface PngHeader {
  width: number;
  height: number;
  bitDepth: number;
  colorType: number;
}

/** Parse the IHDR of any PNG without decoding pixel data. */
export function readHeader(bytes: Uint8Array): PngHeader {
  for (let i = 0; i < SIGNATURE.length; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG file");
  }
  // first chunk must be IHDR: length(4) type(4) data(13)
  const type = String.fromCharCode(bytes[12], bytes[13], bytes[14], bytes[15]);
  if (type !== "IHDR") throw new Error("missing IHDR");
  return {
    width: readU32be(bytes, 16),
    height: readU32be(bytes, 20),
    bitDepth: bytes[24],
    colorType: bytes[25],
  };
}

export interface Gray8Image {
  width: number;
  height: number;
  pixels: Uint8Array;
}

/** Decode a PNG written by encodeGray8 (8-bit gray, filter none, stored deflate). */
export function decodeGray8(bytes: Uint8Array): Gray8Image {
  const header = readHeader(bytes);
  if (header.bitDepth !== 8 || header.colorType !== 0) {
    throw new Error("only 8-bit grayscale is supported");
  }
  const idat: Uint8Array[] = [];
  let pos = 8;
  for (;;) {
    if (pos + 8 > bytes.length) throw new Error("PNG truncated");
    const len = readU32be(bytes, pos);
    const type = String.fromCharCode(bytes[pos + 4], bytes[pos + 5], bytes[pos + 6], bytes[pos + 7]);
    const data = bytes.subarray(pos + 8, pos + 8 + len);
    const body = bytes.subarray(pos + 4, pos + 8 + len);
    if (crc32(body) !== readU32be(bytes, pos + 8 + len)) {
      throw new Error(`bad CRC in ${type}`);
    }
    if (type === "IDAT") idat.push(data);
    pos += 12 + len;
    if (type === "IEND") break;
  }
  const raw = zlibUnstore(concat(idat));
  const { width, height } = header;
  if (raw.length !== height * (width + 1)) {
    throw new Error("unexpected scanline data length");
  }
  const pixels = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    if (raw[y * (width + 1)] !== 0) {
      throw new Error("only filter type 0 is supported");
    }
    pixels.set(raw.subarray(y * (width + 1) + 1, (y + 1) * (width + 1)), y * width);
  }
  return { width, height, pixels };
}
