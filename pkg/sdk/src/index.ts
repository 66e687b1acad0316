export {
  AuthenticationError,
  Envelope,
  NonceSequence,
  decrypt,
  encrypt,
  envelopeFromJsonBytes,
  envelopeToJsonBytes,
} from './envelope.js';
export { BrokerClient, BrokerError, NotConnectedError, TimeoutError } from './client.js';
export { Frame, FrameSplitter, decodeFrameBody, encodeFrame } from './frames.js';
export { ActionCommand, Scalar, SdkDevice, SdkDeviceOptions } from './device.js';
