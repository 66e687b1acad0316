/**
 * Authenticated envelopes, implemented from docs/wire-format.md alone.
 *
 * Wire shape (byte-exact):
 *   {"v":1,"kid":...,"sid":...,"n":b64,"ct":b64,"aad":b64}
 *
 * AES-256-GCM with the header-binding additional data
 *   version byte || len16(kid) || kid || len16(sid) || sid || len16(aad) || aad
 * and deterministic nonces sha256(sender)[0..4] || counter_be64.
 */

import { createCipheriv, createDecipheriv, createHash } from 'node:crypto';

export const ENVELOPE_VERSION = 1;
export const KEY_BYTES = 32;
export const NONCE_BYTES = 12;
export const TAG_BYTES = 16;
export const MAX_PLAINTEXT = 1 << 20;

export class AuthenticationError extends Error {}
export class NonceExhaustedError extends Error {}

export interface Envelope {
  version: number;
  keyId: string;
  sender: string;
  nonce: Buffer;
  ciphertextAndTag: Buffer;
  aad: Buffer;
}

const COUNTER_MAX = (1n << 64n) - 1n;

/** Deterministic per-sender nonces: 4-byte sender salt then a 64-bit counter. */
export class NonceSequence {
  private readonly salt: Buffer;
  private counter: bigint;

  constructor(sender: string, start: bigint | number = 0n) {
    this.salt = createHash('sha256').update(Buffer.from(sender, 'utf-8')).digest().subarray(0, 4);
    this.counter = BigInt(start);
  }

  next(): Buffer {
    if (this.counter > COUNTER_MAX) {
      throw new NonceExhaustedError('nonce counter wrapped; retire this key');
    }
    const nonce = Buffer.alloc(NONCE_BYTES);
    this.salt.copy(nonce, 0);
    nonce.writeBigUInt64BE(this.counter, 4);
    this.counter += 1n;
    return nonce;
  }
}

function gcmAad(version: number, keyId: string, sender: string, aad: Buffer): Buffer {
  const parts: Buffer[] = [Buffer.from([version])];
  for (const chunk of [Buffer.from(keyId, 'utf-8'), Buffer.from(sender, 'utf-8'), aad]) {
    if (chunk.length > 0xffff) {
      throw new AuthenticationError('envelope header field exceeds 65535 bytes');
    }
    const len = Buffer.alloc(2);
    len.writeUInt16BE(chunk.length);
    parts.push(len, chunk);
  }
  return Buffer.concat(parts);
}

export function encrypt(
  key: Buffer,
  keyId: string,
  plaintext: Buffer,
  aad: Buffer,
  sender: string,
  nonces: NonceSequence,
): Envelope {
  if (key.length !== KEY_BYTES) {
    throw new AuthenticationError(`key must be ${KEY_BYTES} bytes`);
  }
  if (plaintext.length > MAX_PLAINTEXT) {
    throw new AuthenticationError(`plaintext exceeds ${MAX_PLAINTEXT} bytes`);
  }
  const nonce = nonces.next();
  const cipher = createCipheriv('aes-256-gcm', key, nonce, { authTagLength: TAG_BYTES });
  cipher.setAAD(gcmAad(ENVELOPE_VERSION, keyId, sender, aad));
  const body = Buffer.concat([cipher.update(plaintext), cipher.final()]);
  return {
    version: ENVELOPE_VERSION,
    keyId,
    sender,
    nonce,
    ciphertextAndTag: Buffer.concat([body, cipher.getAuthTag()]),
    aad,
  };
}

export function decrypt(key: Buffer, env: Envelope, expectedAad?: Buffer): Buffer {
  if (env.version !== ENVELOPE_VERSION) {
    throw new AuthenticationError(`unsupported envelope version ${env.version}`);
  }
  if (expectedAad !== undefined && !env.aad.equals(expectedAad)) {
    throw new AuthenticationError('envelope bound to a different topic');
  }
  if (env.ciphertextAndTag.length < TAG_BYTES || env.nonce.length !== NONCE_BYTES) {
    throw new AuthenticationError('malformed envelope');
  }
  const body = env.ciphertextAndTag.subarray(0, env.ciphertextAndTag.length - TAG_BYTES);
  const tag = env.ciphertextAndTag.subarray(env.ciphertextAndTag.length - TAG_BYTES);
  const decipher = createDecipheriv('aes-256-gcm', key, env.nonce, { authTagLength: TAG_BYTES });
  decipher.setAAD(gcmAad(env.version, env.keyId, env.sender, env.aad));
  decipher.setAuthTag(tag);
  try {
    return Buffer.concat([decipher.update(body), decipher.final()]);
  } catch {
    throw new AuthenticationError('envelope failed authentication');
  }
}

/** Canonical base64: decoding then re-encoding must give the input back. */
function fromCanonicalBase64(text: unknown, field: string): Buffer {
  if (typeof text !== 'string') {
    throw new AuthenticationError(`envelope field ${field} must be a string`);
  }
  const raw = Buffer.from(text, 'base64');
  if (raw.toString('base64') !== text) {
    throw new AuthenticationError(`envelope field ${field} is not canonical base64`);
  }
  return raw;
}

export function envelopeToJsonBytes(env: Envelope): Buffer {
  // key order v, kid, sid, n, ct, aad is part of the contract; JS object
  // insertion order plus JSON.stringify produces exactly that
  const obj = {
    v: env.version,
    kid: env.keyId,
    sid: env.sender,
    n: env.nonce.toString('base64'),
    ct: env.ciphertextAndTag.toString('base64'),
    aad: env.aad.toString('base64'),
  };
  return Buffer.from(JSON.stringify(obj), 'utf-8');
}

export function envelopeFromJsonBytes(data: Buffer): Envelope {
  let obj: Record<string, unknown>;
  try {
    obj = JSON.parse(data.toString('utf-8'));
  } catch {
    throw new AuthenticationError('payload is not a JSON envelope');
  }
  if (typeof obj !== 'object' || obj === null) {
    throw new AuthenticationError('payload is not a JSON envelope');
  }
  for (const field of ['v', 'kid', 'sid', 'n', 'ct', 'aad']) {
    if (!(field in obj)) {
      throw new AuthenticationError(`envelope missing field ${field}`);
    }
  }
  if (obj.v !== ENVELOPE_VERSION) {
    throw new AuthenticationError(`unsupported envelope version ${String(obj.v)}`);
  }
  if (typeof obj.kid !== 'string' || typeof obj.sid !== 'string') {
    throw new AuthenticationError('envelope kid/sid must be strings');
  }
  const nonce = fromCanonicalBase64(obj.n, 'n');
  const ct = fromCanonicalBase64(obj.ct, 'ct');
  const aad = fromCanonicalBase64(obj.aad, 'aad');
  if (nonce.length !== NONCE_BYTES || ct.length < TAG_BYTES) {
    throw new AuthenticationError('malformed envelope');
  }
  return {
    version: ENVELOPE_VERSION,
    keyId: obj.kid,
    sender: obj.sid,
    nonce,
    ciphertextAndTag: ct,
    aad,
  };
}
