/**
 * Deterministic procedurally generated image-classification set.
 *
 * Four classes of 32x32 RGB patterns (horizontal gradient, vertical
 * stripes, checkerboard, radial blob) with per-image color jitter, phase
 * shifts and pixel noise.  A stand-in for a real small image set at desk
 * scale; everything is reproducible from the seed.
 */
import * as tf from '@tensorflow/tfjs';

import { mulberry32, Rng } from './rng.js';

export const NUM_CLASSES = 4;

export interface Dataset {
  trainX: tf.Tensor4D;
  trainY: tf.Tensor1D; // int labels
  valX: tf.Tensor4D;
  valY: tf.Tensor1D;
  resolution: number;
}

function paintImage(cls: number, res: number, rng: Rng): Float32Array {
  const img = new Float32Array(res * res * 3);
  const baseR = 0.3 + 0.4 * rng();
  const baseG = 0.3 + 0.4 * rng();
  const baseB = 0.3 + 0.4 * rng();
  const phase = rng() * res;
  const period = 4 + Math.floor(rng() * 4);
  const cx = res / 2 + (rng() - 0.5) * 6;
  const cy = res / 2 + (rng() - 0.5) * 6;
  for (let y = 0; y < res; y++) {
    for (let x = 0; x < res; x++) {
      let v: number;
      switch (cls) {
        case 0:
          v = (x + phase) / res % 1;
          break;
        case 1:
          v = Math.floor((x + phase) / period) % 2;
          break;
        case 2:
          v = (Math.floor(x / period) + Math.floor(y / period)) % 2;
          break;
        default: {
          const d = Math.hypot(x - cx, y - cy);
          v = Math.max(0, 1 - d / (res / 2));
        }
      }
      const i = (y * res + x) * 3;
      const noise = () => (rng() - 0.5) * 0.15;
      img[i] = Math.min(1, Math.max(0, v * baseR + noise()));
      img[i + 1] = Math.min(1, Math.max(0, v * baseG + noise()));
      img[i + 2] = Math.min(1, Math.max(0, v * baseB + noise()));
    }
  }
  return img;
}

export function makeDataset(trainSize: number, valSize: number, seed: number,
                            resolution = 32): Dataset {
  const rng = mulberry32(seed);
  const build = (n: number): [tf.Tensor4D, tf.Tensor1D] => {
    const data = new Float32Array(n * resolution * resolution * 3);
    const labels = new Int32Array(n);
    for (let i = 0; i < n; i++) {
      const cls = i % NUM_CLASSES;
      labels[i] = cls;
      data.set(paintImage(cls, resolution, rng), i * resolution * resolution * 3);
    }
    return [
      tf.tensor4d(data, [n, resolution, resolution, 3]),
      tf.tensor1d(labels, 'int32'),
    ];
  };
  const [trainX, trainY] = build(trainSize);
  const [valX, valY] = build(valSize);
  return { trainX, trainY, valX, valY, resolution };
}
