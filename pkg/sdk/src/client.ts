/**
 * Minimal broker client: acked publishes, pattern subscriptions, a queue
 * of deliveries. One in-flight control request at a time, matching the
 * broker's $ctl/ack | $ctl/suback | $ctl/err replies by sequence number.
 */

import { Socket, connect } from 'node:net';

import { Frame, FrameSplitter, MAX_PAYLOAD, encodeFrame } from './frames.js';

export class NotConnectedError extends Error {}
export class BrokerError extends Error {}
export class TimeoutError extends Error {}

const CTL_SUB = '$ctl/sub';
const CTL_ACK = '$ctl/ack';
const CTL_SUBACK = '$ctl/suback';
const CTL_ERR = '$ctl/err';

interface Waiter {
  resolve: (frame: Frame) => void;
  timer: NodeJS.Timeout | null;
}

export class BrokerClient {
  private socket: Socket | null = null;
  private readonly splitter = new FrameSplitter();
  private seq = 0;
  private lastDeliverySeq = 0;
  private inbound: Frame[] = [];
  private waiters: Waiter[] = [];
  private control: ((frame: Frame) => void) | null = null;
  private chain: Promise<unknown> = Promise.resolve();

  async connect(host: string, port: number, timeoutMs = 5000): Promise<void> {
    await new Promise<void>((resolve, reject) => {
      const socket = connect({ host, port, noDelay: true });
      const timer = setTimeout(() => {
        socket.destroy();
        reject(new NotConnectedError(`cannot reach broker at ${host}:${port}`));
      }, timeoutMs);
      socket.once('connect', () => {
        clearTimeout(timer);
        this.socket = socket;
        socket.on('data', (chunk) => this.onData(chunk));
        socket.on('close', () => {
          this.socket = null;
        });
        socket.on('error', () => {
          this.socket = null;
        });
        resolve();
      });
      socket.once('error', (err) => {
        clearTimeout(timer);
        reject(new NotConnectedError(`cannot reach broker at ${host}:${port}: ${err.message}`));
      });
    });
  }

  get connected(): boolean {
    return this.socket !== null;
  }

  private onData(chunk: Buffer): void {
    for (const frame of this.splitter.push(chunk)) {
      if (frame.topic === CTL_ACK || frame.topic === CTL_SUBACK || frame.topic === CTL_ERR) {
        this.control?.(frame);
        continue;
      }
      if (frame.seq <= this.lastDeliverySeq) {
        continue; // at-least-once transport: drop anything not strictly newer
      }
      this.lastDeliverySeq = frame.seq;
      const waiter = this.waiters.shift();
      if (waiter) {
        if (waiter.timer) {
          clearTimeout(waiter.timer);
        }
        waiter.resolve(frame);
      } else {
        this.inbound.push(frame);
      }
    }
  }

  private roundtrip(frame: Buffer, wantSeq: number, timeoutMs: number): Promise<Frame> {
    const run = async (): Promise<Frame> => {
      if (this.socket === null) {
        throw new NotConnectedError('connection is closed');
      }
      return await new Promise<Frame>((resolve, reject) => {
        const timer = setTimeout(() => {
          this.control = null;
          reject(new NotConnectedError('broker did not answer in time'));
        }, timeoutMs);
        this.control = (reply) => {
          const obj = JSON.parse(reply.payload.toString('utf-8'));
          if (obj.seq !== wantSeq) {
            return;
          }
          clearTimeout(timer);
          this.control = null;
          if (reply.topic === CTL_ERR) {
            reject(new BrokerError(`${obj.error}: ${obj.detail ?? ''}`));
          } else {
            resolve(reply);
          }
        };
        this.socket!.write(frame);
      });
    };
    // serialize control requests
    const next = this.chain.then(run, run);
    this.chain = next.catch(() => undefined);
    return next;
  }

  async publish(topic: string, payload: Buffer, timeoutMs = 10000): Promise<number> {
    if (payload.length > MAX_PAYLOAD) {
      throw new BrokerError(`payload exceeds ${MAX_PAYLOAD} bytes`);
    }
    const seq = ++this.seq;
    await this.roundtrip(encodeFrame(topic, seq, payload), seq, timeoutMs);
    return seq;
  }

  async subscribe(pattern: string, timeoutMs = 10000): Promise<void> {
    const seq = ++this.seq;
    await this.roundtrip(encodeFrame(CTL_SUB, seq, Buffer.from(pattern, 'utf-8')), seq, timeoutMs);
  }

  /** Next delivery, or null when the timeout elapses first. */
  receive(timeoutMs: number): Promise<Frame | null> {
    const queued = this.inbound.shift();
    if (queued) {
      return Promise.resolve(queued);
    }
    return new Promise((resolve) => {
      const waiter: Waiter = { resolve: (frame) => resolve(frame), timer: null };
      waiter.timer = setTimeout(() => {
        this.waiters = this.waiters.filter((w) => w !== waiter);
        resolve(null);
      }, timeoutMs);
      this.waiters.push(waiter);
    });
  }

  close(): void {
    this.socket?.destroy();
    this.socket = null;
  }
}
