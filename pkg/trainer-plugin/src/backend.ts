/** Backend initialization.
 *
 * Training sticks to the default JS CPU backend: the WASM backend lacks
 * the convolution backprop kernels (Conv2DBackpropFilter), so it can only
 * serve inference.
 */
import * as tf from '@tensorflow/tfjs';

export async function initBackend(): Promise<string> {
  await tf.ready();
  return tf.getBackend();
}
