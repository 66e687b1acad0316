/**
 * A device client: publishes its readings as envelopes the engine can
 * open, and receives only commands that verify against its own key and
 * command topic. Keys are injected via configuration; there is no
 * attestation client here.
 */

import { BrokerClient, TimeoutError } from './client.js';
import {
  AuthenticationError,
  NonceSequence,
  decrypt,
  encrypt,
  envelopeFromJsonBytes,
  envelopeToJsonBytes,
} from './envelope.js';

export type Scalar = string | number | boolean;

export interface ActionCommand {
  device: string;
  capability: string;
  command: string;
  arguments: Scalar[];
}

export interface SdkDeviceOptions {
  deviceId: string;
  /** 32-byte session key, hex encoded. */
  keyHex: string;
  host: string;
  port: number;
  capability?: string;
}

export class SdkDevice {
  readonly deviceId: string;
  readonly eventTopic: string;
  readonly commandTopic: string;
  droppedCommands = 0;

  private readonly key: Buffer;
  private readonly capability: string;
  private readonly client = new BrokerClient();
  private readonly nonces: NonceSequence;
  private readonly host: string;
  private readonly port: number;

  constructor(options: SdkDeviceOptions) {
    this.deviceId = options.deviceId;
    this.key = Buffer.from(options.keyHex, 'hex');
    if (this.key.length !== 32) {
      throw new Error('keyHex must decode to 32 bytes');
    }
    this.capability = options.capability ?? 'sensor';
    this.host = options.host;
    this.port = options.port;
    this.eventTopic = `evt/${options.deviceId}`;
    this.commandTopic = `cmd/${options.deviceId}`;
    this.nonces = new NonceSequence(options.deviceId);
  }

  async connect(): Promise<void> {
    await this.client.connect(this.host, this.port);
    await this.client.subscribe(this.commandTopic);
  }

  /** Publish one reading; resolves with the broker ack sequence. */
  async sendEvent(attribute: string, value: Scalar, timestampUs?: number): Promise<number> {
    const event = {
      device: this.deviceId,
      capability: this.capability,
      attribute,
      value,
      timestamp: timestampUs ?? Date.now() * 1000,
    };
    const envelope = encrypt(
      this.key,
      this.deviceId,
      Buffer.from(JSON.stringify(event), 'utf-8'),
      Buffer.from(this.eventTopic, 'utf-8'),
      this.deviceId,
      this.nonces,
    );
    return await this.client.publish(this.eventTopic, envelopeToJsonBytes(envelope));
  }

  /**
   * Wait for the next verified command. Deliveries that fail any check
   * (tampered, wrong topic binding, wrong target) are dropped and counted,
   * and the wait continues until the timeout.
   */
  async receiveCommand(timeoutMs: number): Promise<ActionCommand> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const remaining = deadline - Date.now();
      if (remaining <= 0) {
        throw new TimeoutError(`no command within ${timeoutMs}ms`);
      }
      const frame = await this.client.receive(remaining);
      if (frame === null) {
        throw new TimeoutError(`no command within ${timeoutMs}ms`);
      }
      if (frame.topic !== this.commandTopic) {
        continue;
      }
      try {
        const envelope = envelopeFromJsonBytes(frame.payload);
        if (envelope.keyId !== this.deviceId) {
          throw new AuthenticationError('command keyed for another device');
        }
        const plaintext = decrypt(this.key, envelope, Buffer.from(frame.topic, 'utf-8'));
        const command = parseCommand(plaintext);
        if (command.device !== this.deviceId) {
          throw new AuthenticationError('command targets another device');
        }
        return command;
      } catch (error) {
        if (error instanceof AuthenticationError) {
          this.droppedCommands += 1;
          continue;
        }
        throw error;
      }
    }
  }

  close(): void {
    this.client.close();
  }
}

function parseCommand(plaintext: Buffer): ActionCommand {
  let obj: Record<string, unknown>;
  try {
    obj = JSON.parse(plaintext.toString('utf-8'));
  } catch {
    throw new AuthenticationError('command payload is not JSON');
  }
  if (
    typeof obj.device !== 'string' ||
    typeof obj.capability !== 'string' ||
    typeof obj.command !== 'string'
  ) {
    throw new AuthenticationError('command payload missing fields');
  }
  const args = Array.isArray(obj.arguments) ? (obj.arguments as Scalar[]) : [];
  return { device: obj.device, capability: obj.capability, command: obj.command, arguments: args };
}
