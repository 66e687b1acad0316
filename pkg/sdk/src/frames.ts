/**
 * Broker framing: 4-byte big-endian length, then UTF-8 JSON
 * {"topic": str, "seq": int, "payload_b64": str}.
 */

export const MAX_PAYLOAD = 1 << 20;

export interface Frame {
  topic: string;
  seq: number;
  payload: Buffer;
}

export function encodeFrame(topic: string, seq: number, payload: Buffer): Buffer {
  const body = Buffer.from(
    JSON.stringify({ topic, seq, payload_b64: payload.toString('base64') }),
    'utf-8',
  );
  const header = Buffer.alloc(4);
  header.writeUInt32BE(body.length);
  return Buffer.concat([header, body]);
}

export function decodeFrameBody(body: Buffer): Frame {
  const obj = JSON.parse(body.toString('utf-8'));
  if (typeof obj.topic !== 'string' || typeof obj.seq !== 'number' || typeof obj.payload_b64 !== 'string') {
    throw new Error('malformed frame');
  }
  return { topic: obj.topic, seq: obj.seq, payload: Buffer.from(obj.payload_b64, 'base64') };
}

/** Accumulates stream chunks and yields complete frames. */
export class FrameSplitter {
  private buffer = Buffer.alloc(0);

  push(chunk: Buffer): Frame[] {
    this.buffer = Buffer.concat([this.buffer, chunk]);
    const frames: Frame[] = [];
    for (;;) {
      if (this.buffer.length < 4) {
        break;
      }
      const length = this.buffer.readUInt32BE(0);
      if (this.buffer.length < 4 + length) {
        break;
      }
      frames.push(decodeFrameBody(this.buffer.subarray(4, 4 + length)));
      this.buffer = this.buffer.subarray(4 + length);
    }
    return frames;
  }
}
