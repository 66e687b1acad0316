import { describe, expect, it } from 'vitest';

import { FrameSplitter, decodeFrameBody, encodeFrame } from '../src/frames.js';

describe('frame codec', () => {
  it('round trips', () => {
    const frame = encodeFrame('evt/d1', 7, Buffer.from([0, 1, 2, 255]));
    expect(frame.readUInt32BE(0)).toBe(frame.length - 4);
    const decoded = decodeFrameBody(frame.subarray(4));
    expect(decoded.topic).toBe('evt/d1');
    expect(decoded.seq).toBe(7);
    expect(decoded.payload).toEqual(Buffer.from([0, 1, 2, 255]));
  });

  it('byte-compatible with the documented encoding', () => {
    const frame = encodeFrame('prov/rules', 1, Buffer.from('hi'));
    const body = frame.subarray(4).toString('utf-8');
    expect(body).toBe('{"topic":"prov/rules","seq":1,"payload_b64":"aGk="}');
  });

  it('splits a stream into whole frames across chunk boundaries', () => {
    const a = encodeFrame('evt/d1', 1, Buffer.from('one'));
    const b = encodeFrame('evt/d2', 2, Buffer.from('two'));
    const joined = Buffer.concat([a, b]);
    const splitter = new FrameSplitter();
    const got: string[] = [];
    for (let i = 0; i < joined.length; i += 3) {
      for (const frame of splitter.push(joined.subarray(i, i + 3))) {
        got.push(frame.payload.toString());
      }
    }
    expect(got).toEqual(['one', 'two']);
  });
});
