/**
 * Builds a trainable network from an architecture payload.
 *
 * The structure mirrors the engine's analytic cost model exactly so that
 * the trainable-parameter count matches it integer-for-integer:
 * convolutions carry no bias but are followed by batch norm (gamma+beta
 * trainable, moving stats not), squeeze-excitation reduces to
 * max(8, nearest multiple of 8, ties up) of a quarter of the block input
 * and its two pointwise convs carry biases, the pooled head's 1x1 conv
 * carries a bias and no batch norm, and the classifier carries a bias.
 *
 * Implemented with explicit variables and a functional forward pass (not
 * the layers API) so stochastic depth, SE gating and EMA weight swaps
 * stay simple.
 */
import * as tf from '@tensorflow/tfjs';

import type { ArchPayload, StagePayload } from './protocol.js';

const BN_MOMENTUM = 0.9;
const BN_EPS = 1e-3;

type Forward = (x: tf.Tensor4D, training: boolean) => tf.Tensor4D;

export interface BuiltNetwork {
  /** Logits of shape [batch, numClasses]. */
  forward(x: tf.Tensor4D, training: boolean): tf.Tensor2D;
  trainable: tf.Variable[];
  /** Convolution/dense kernels only (weight-decay targets). */
  kernels: tf.Variable[];
  countTrainableParams(): number;
  dispose(): void;
}

export function seChannels(cIn: number): number {
  return Math.max(8, 8 * Math.floor(cIn / 4 / 8 + 0.5));
}

export function midChannels(expansion: number, cIn: number): number {
  return Math.max(1, Math.floor(expansion * cIn + 0.5));
}

function hswish(x: tf.Tensor): tf.Tensor {
  return tf.mul(x, tf.div(tf.clipByValue(tf.add(x, 3), 0, 6), 6));
}

function hsigmoid(x: tf.Tensor): tf.Tensor {
  return tf.div(tf.clipByValue(tf.add(x, 3), 0, 6), 6);
}

function activate(x: tf.Tensor, name: string): tf.Tensor {
  if (name === 'hswish') return hswish(x);
  if (name === 'relu') return tf.relu(x);
  if (name === 'none') return x;
  return hswish(x); // default family activation
}

class Builder {
  trainable: tf.Variable[] = [];
  kernels: tf.Variable[] = [];
  all: tf.Variable[] = [];
  private seedCounter: number;

  constructor(seed: number) {
    this.seedCounter = (seed >>> 0) + 1;
  }

  private nextSeed(): number {
    return this.seedCounter++;
  }

  variable(shape: number[], fanIn: number, fanOut: number, kernel: boolean): tf.Variable {
    const limit = Math.sqrt(6 / (fanIn + fanOut));
    const v = tf.variable(tf.randomUniform(shape, -limit, limit, 'float32', this.nextSeed()));
    this.trainable.push(v);
    this.all.push(v);
    if (kernel) this.kernels.push(v);
    return v;
  }

  zeros(shape: number[], trainable = true): tf.Variable {
    const v = tf.variable(tf.zeros(shape), trainable);
    if (trainable) this.trainable.push(v);
    this.all.push(v);
    return v;
  }

  ones(shape: number[], trainable = true): tf.Variable {
    const v = tf.variable(tf.ones(shape), trainable);
    if (trainable) this.trainable.push(v);
    this.all.push(v);
    return v;
  }

  batchNorm(channels: number): Forward {
    const gamma = this.ones([channels]);
    const beta = this.zeros([channels]);
    const movingMean = this.zeros([channels], false);
    const movingVar = this.ones([channels], false);
    return (x, training) => {
      if (training) {
        const mean = tf.mean(x, [0, 1, 2]);
        const variance = tf.sub(tf.mean(tf.square(x), [0, 1, 2]), tf.square(mean));
        tf.tidy(() => {
          movingMean.assign(tf.add(tf.mul(movingMean, BN_MOMENTUM), tf.mul(mean, 1 - BN_MOMENTUM)));
          movingVar.assign(tf.add(tf.mul(movingVar, BN_MOMENTUM), tf.mul(variance, 1 - BN_MOMENTUM)));
        });
        return tf.batchNorm(x, mean, variance, beta, gamma, BN_EPS) as tf.Tensor4D;
      }
      return tf.batchNorm(x, movingMean, movingVar, beta, gamma, BN_EPS) as tf.Tensor4D;
    };
  }

  conv(kernelSize: number, cIn: number, cOut: number, stride: number,
       { bias = false, bn = true, act = 'hswish' }: { bias?: boolean; bn?: boolean; act?: string }): Forward {
    const fan = kernelSize * kernelSize;
    const kernel = this.variable([kernelSize, kernelSize, cIn, cOut], fan * cIn, fan * cOut, true);
    const b = bias ? this.zeros([cOut]) : null;
    const norm = bn ? this.batchNorm(cOut) : null;
    return (x, training) => {
      let y = tf.conv2d(x, kernel as unknown as tf.Tensor4D, stride, 'same');
      if (b) y = tf.add(y, b) as tf.Tensor4D;
      if (norm) y = norm(y, training);
      return activate(y, act) as tf.Tensor4D;
    };
  }

  depthwise(kernelSize: number, channels: number, stride: number, act: string): Forward {
    const kernel = this.variable([kernelSize, kernelSize, channels, 1],
                                 kernelSize * kernelSize, kernelSize * kernelSize, true);
    const norm = this.batchNorm(channels);
    return (x, training) => {
      const y = tf.depthwiseConv2d(x, kernel as unknown as tf.Tensor4D, stride, 'same');
      return activate(norm(y, training), act) as tf.Tensor4D;
    };
  }

  squeezeExcite(channels: number, cBase: number): Forward {
    const cSe = seChannels(cBase);
    const reduce = this.variable([1, 1, channels, cSe], channels, cSe, true);
    const reduceBias = this.zeros([cSe]);
    const expand = this.variable([1, 1, cSe, channels], cSe, channels, true);
    const expandBias = this.zeros([channels]);
    return (x) => {
      const pooled = tf.mean(x, [1, 2], true);
      let gate = tf.add(tf.conv2d(pooled as tf.Tensor4D, reduce as unknown as tf.Tensor4D, 1, 'same'), reduceBias);
      gate = tf.relu(gate);
      gate = tf.add(tf.conv2d(gate as tf.Tensor4D, expand as unknown as tf.Tensor4D, 1, 'same'), expandBias);
      gate = hsigmoid(gate);
      return tf.mul(x, gate) as tf.Tensor4D;
    };
  }

  dropPathSeed(): number {
    return this.nextSeed();
  }
}

function mbconvBlock(b: Builder, stage: StagePayload, cIn: number, expansion: number,
                     stride: number, dropProb: number): Forward {
  const cMid = midChannels(expansion, cIn);
  const expand = b.conv(1, cIn, cMid, 1, { act: stage.activation });
  const dw = b.depthwise(stage.kernel ?? 3, cMid, stride, stage.activation);
  const se = stage.se ? b.squeezeExcite(cMid, cIn) : null;
  const project = b.conv(1, cMid, stage.channels, 1, { act: 'none' });
  const residual = stride === 1 && cIn === stage.channels;
  const seedBase = b.dropPathSeed();
  let calls = 0;

  return (x, training) => {
    let y = expand(x, training);
    y = dw(y, training);
    if (se) y = se(y, training) as tf.Tensor4D;
    y = project(y, training);
    if (!residual) return y;
    if (training && dropProb > 0) {
      // per-sample branch drop with survival rescaling; the seed advances
      // per call so masks differ between steps but replay per run seed
      const keep = 1 - dropProb;
      calls += 1;
      const mask = tf.floor(tf.add(
        tf.randomUniform([x.shape[0], 1, 1, 1], 0, 1, 'float32', seedBase + calls), keep));
      y = tf.mul(y, tf.div(mask, keep)) as tf.Tensor4D;
    }
    return tf.add(x, y) as tf.Tensor4D;
  };
}

export interface BuildOptions {
  inputResolution?: number;   // dataset resolution; may differ from arch.resolution
  dropout?: number;           // classifier dropout probability
  stochasticDepth?: number;   // final-block drop probability, scaled linearly over blocks
  seed?: number;
}

export function buildNetwork(arch: ArchPayload, opts: BuildOptions = {}): BuiltNetwork {
  const b = new Builder(opts.seed ?? 0);
  const dropout = opts.dropout ?? 0;
  const maxDrop = Math.min(opts.stochasticDepth ?? 0, 0.9);
  const inputRes = opts.inputResolution ?? arch.resolution;

  // Low-resolution inputs keep their native size; the second stride-two
  // stage becomes stride-one so the stack still fits.
  let strides = arch.stages.map((s) => s.stride);
  if (inputRes <= 32 && inputRes < arch.resolution) {
    let seen = 0;
    strides = strides.map((s) => {
      if (s === 2) {
        seen += 1;
        if (seen === 2) return 1;
      }
      return s;
    });
  }

  const totalBlocks = arch.stages.reduce(
    (n, s) => n + (s.block === 'conv' || s.block === 'mbconv' ? s.depth : 0), 0);
  let blockIndex = 0;
  const dropFor = () => {
    blockIndex += 1;
    return totalBlocks > 0 ? (maxDrop * blockIndex) / totalBlocks : 0;
  };

  const pipeline: Forward[] = [];
  let c = 3;
  let fcWidth: number | null = null;
  const dropoutSeed = b.dropPathSeed();

  for (let si = 0; si < arch.stages.length; si++) {
    const stage = arch.stages[si];
    const stride = strides[si];
    if (stage.block === 'conv') {
      for (let i = 0; i < stage.depth; i++) {
        dropFor(); // plain convs are not droppable but keep the schedule aligned
        pipeline.push(b.conv(stage.kernel ?? 3, c, stage.channels, i === 0 ? stride : 1,
                             { act: stage.activation }));
        c = stage.channels;
      }
    } else if (stage.block === 'mbconv') {
      for (let i = 0; i < stage.depth; i++) {
        const expansion = i === 0 ? (stage.expansion_first ?? 1) : (stage.expansion_rest ?? 1);
        pipeline.push(mbconvBlock(b, stage, c, expansion, i === 0 ? stride : 1, dropFor()));
        c = stage.channels;
      }
    } else if (stage.block === 'mbpool') {
      const cMid = midChannels(stage.expansion_first ?? 1, c);
      pipeline.push(b.conv(1, c, cMid, 1, { act: stage.activation }));
      if (stage.kernel !== null && stage.kernel !== undefined) {
        pipeline.push(b.depthwise(stage.kernel, cMid, 1, stage.activation));
      }
      pipeline.push((x) => tf.mean(x, [1, 2], true) as tf.Tensor4D);
      pipeline.push(b.conv(1, cMid, stage.channels, 1,
                           { bias: true, bn: false, act: stage.activation }));
      c = stage.channels;
    } else if (stage.block === 'fc') {
      fcWidth = stage.channels;
    } else if (stage.block === 'skip') {
      if (stage.channels !== c) {
        pipeline.push(b.conv(1, c, stage.channels, 1, { act: stage.activation }));
        c = stage.channels;
      }
    } else {
      throw new Error(`unsupported block kind ${(stage as StagePayload).block}`);
    }
  }
  if (fcWidth === null) throw new Error('architecture has no fc stage');

  const fcKernel = b.variable([c, fcWidth], c, fcWidth, true);
  const fcBias = b.zeros([fcWidth]);
  let dropoutCalls = 0;

  const forward = (x: tf.Tensor4D, training: boolean): tf.Tensor2D => {
    let y: tf.Tensor4D = x;
    for (const step of pipeline) y = step(y, training);
    let flat = tf.reshape(tf.mean(y, [1, 2]), [x.shape[0], c]) as tf.Tensor2D;
    if (training && dropout > 0) {
      dropoutCalls += 1;
      flat = tf.dropout(flat, dropout, undefined, dropoutSeed + dropoutCalls) as tf.Tensor2D;
    }
    return tf.add(tf.matMul(flat, fcKernel as unknown as tf.Tensor2D), fcBias) as tf.Tensor2D;
  };

  return {
    forward,
    trainable: b.trainable,
    kernels: b.kernels,
    countTrainableParams: () => b.trainable.reduce((n, v) => n + v.size, 0),
    dispose: () => b.all.forEach((v) => v.dispose()),
  };
}
