/**
 * Training loop: build the network from the request's architecture, apply
 * the recipe (optimizer choice with the SGD learning-rate rule, weight
 * decay on kernels only, dropout, linearly scaled stochastic depth,
 * mixup, optional EMA evaluation) and report held-out accuracy per epoch.
 */
import * as tf from '@tensorflow/tfjs';

import { Dataset, NUM_CLASSES, makeDataset } from './dataset.js';
import { BuiltNetwork, buildNetwork } from './network.js';
import { AppliedRecipe, EvalRequest, applyRecipe } from './protocol.js';
import { EmaTracker, distillLoss, mixupBatch, mixupCrossEntropy } from './recipe.js';
import { mulberry32, shuffled } from './rng.js';

const BATCH_SIZE = 32;

export interface EvalRun {
  curve: number[];
  epoch0Accuracy: number;
}

export interface TrainOptions {
  dataset?: Dataset;
  trainSize?: number;
  valSize?: number;
  onEpoch?: (epoch: number, accuracy: number) => void;
  teacher?: (x: tf.Tensor4D) => tf.Tensor2D;
}

function accuracy(net: BuiltNetwork, x: tf.Tensor4D, y: tf.Tensor1D): number {
  return tf.tidy(() => {
    const preds = tf.argMax(net.forward(x, false), 1);
    return tf.mean(tf.cast(tf.equal(preds, y), 'float32')).dataSync()[0];
  });
}

function makeOptimizer(recipe: AppliedRecipe): tf.Optimizer {
  if (recipe.optimizer === 'sgd') {
    return tf.train.momentum(recipe.learningRate, 0.9);
  }
  return tf.train.rmsprop(recipe.learningRate);
}

/** Train one candidate and return its per-epoch held-out accuracy curve. */
export async function runEval(request: EvalRequest, opts: TrainOptions = {}): Promise<EvalRun> {
  const recipe = applyRecipe(request.candidate.recipe, request.candidate.units);
  const data = opts.dataset
    ?? makeDataset(opts.trainSize ?? 500, opts.valSize ?? 100, request.seed);
  const ownsData = opts.dataset === undefined;

  const net = buildNetwork(request.candidate.arch, {
    inputResolution: data.resolution,
    dropout: recipe.dropout,
    stochasticDepth: recipe.stochasticDepth,
    seed: request.seed,
  });
  const optimizer = makeOptimizer(recipe);
  const ema = recipe.ema ? new EmaTracker(net.trainable, recipe.emaDecay) : null;
  const rng = mulberry32(request.seed ^ 0x9e3779b9);

  const evalAccuracy = () => {
    const measure = () => accuracy(net, data.valX, data.valY);
    return ema ? ema.withEmaWeights(measure) : measure();
  };

  try {
    const epoch0 = evalAccuracy();
    const curve: number[] = [];
    const n = data.trainX.shape[0];

    for (let epoch = 1; epoch <= request.epoch_budget; epoch++) {
      const order = shuffled(n, rng);
      for (let start = 0; start < n; start += BATCH_SIZE) {
        const idx = tf.tensor1d(order.slice(start, start + BATCH_SIZE), 'int32');
        const bx = tf.gather(data.trainX, idx) as tf.Tensor4D;
        const by = tf.gather(data.trainY, idx) as tf.Tensor1D;
        const mixed = mixupBatch(bx, by, recipe.mixupAlpha, rng);

        optimizer.minimize(() => tf.tidy(() => {
          const logits = net.forward(mixed.x, true);
          let loss: tf.Scalar;
          if (opts.teacher) {
            const teacherLogits = opts.teacher(mixed.x);
            loss = distillLoss(logits, teacherLogits, mixed.yA, NUM_CLASSES);
          } else {
            loss = mixupCrossEntropy(logits, mixed.yA, mixed.yB, mixed.lam, NUM_CLASSES);
          }
          if (recipe.weightDecay > 0) {
            const l2 = net.kernels
              .map((k) => tf.sum(tf.square(k)))
              .reduce((a, b) => tf.add(a, b) as tf.Scalar);
            loss = tf.add(loss, tf.mul(l2, recipe.weightDecay / 2)) as tf.Scalar;
          }
          return loss;
        }), false, net.trainable);

        ema?.update();
        idx.dispose(); bx.dispose(); by.dispose();
        mixed.x.dispose(); mixed.yA.dispose(); mixed.yB.dispose();
        await tf.nextFrame();
      }
      const acc = evalAccuracy();
      curve.push(acc);
      opts.onEpoch?.(epoch, acc);
    }
    return { curve, epoch0Accuracy: epoch0 };
  } finally {
    optimizer.dispose();
    ema?.dispose();
    net.dispose();
    if (ownsData) {
      data.trainX.dispose(); data.trainY.dispose();
      data.valX.dispose(); data.valY.dispose();
    }
  }
}
