/**
 * Recipe mechanics shared by the training loop: EMA weight tracking,
 * mixup batch construction and the distillation loss.
 */
import * as tf from '@tensorflow/tfjs';

import { Rng, sampleBetaSymmetric } from './rng.js';

/**
 * w_ema <- alpha * w_ema + (1 - alpha) * w.
 *
 * The scalar form runs in double precision (plain JS numbers) and is the
 * reference arithmetic; the tensor form applies the same update in tfjs's
 * float32.
 */
export function emaScalarUpdate(emaWeights: number[], newWeights: number[], alpha: number): number[] {
  return emaWeights.map((ema, i) => alpha * ema + (1 - alpha) * newWeights[i]);
}

export function emaUpdate(emaWeights: tf.Tensor[], newWeights: tf.Tensor[], alpha: number): tf.Tensor[] {
  return emaWeights.map((ema, i) =>
    tf.tidy(() => tf.add(tf.mul(ema, alpha), tf.mul(newWeights[i], 1 - alpha))));
}

export class EmaTracker {
  private shadow: tf.Tensor[];
  private steps = 0;

  constructor(private readonly variables: tf.Variable[], private readonly alpha: number) {
    this.shadow = variables.map((v) => v.clone());
  }

  update(): void {
    // warmup: the effective decay ramps in so short runs still track the
    // trained weights instead of the initialization
    this.steps += 1;
    const decay = Math.min(this.alpha, (1 + this.steps) / (10 + this.steps));
    const next = emaUpdate(this.shadow, this.variables, decay);
    this.shadow.forEach((t) => t.dispose());
    this.shadow = next;
  }

  /** Run fn with the EMA weights swapped in, then restore. */
  withEmaWeights<T>(fn: () => T): T {
    const saved = this.variables.map((v) => v.clone());
    this.variables.forEach((v, i) => v.assign(this.shadow[i]));
    try {
      return fn();
    } finally {
      this.variables.forEach((v, i) => v.assign(saved[i]));
      saved.forEach((t) => t.dispose());
    }
  }

  dispose(): void {
    this.shadow.forEach((t) => t.dispose());
  }
}

export interface MixedBatch {
  x: tf.Tensor4D;
  yA: tf.Tensor1D;
  yB: tf.Tensor1D;
  lam: number;
}

/**
 * Convex combination of a batch with a shuffled copy of itself;
 * lam ~ Beta(alpha, alpha).  alpha <= 0 disables mixing (lam = 1).
 */
export function mixupBatch(x: tf.Tensor4D, y: tf.Tensor1D, alpha: number, rng: Rng): MixedBatch {
  if (alpha <= 0) {
    return { x: x.clone(), yA: y.clone(), yB: y.clone(), lam: 1 };
  }
  const lam = sampleBetaSymmetric(alpha, rng);
  const n = x.shape[0];
  const perm = Array.from({ length: n }, (_, i) => i);
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(rng() * (i + 1));
    [perm[i], perm[j]] = [perm[j], perm[i]];
  }
  const idx = tf.tensor1d(perm, 'int32');
  const mixed = tf.tidy(() => {
    const shuffledX = tf.gather(x, idx);
    return tf.add(tf.mul(x, lam), tf.mul(shuffledX, 1 - lam)) as tf.Tensor4D;
  });
  const yB = tf.gather(y, idx);
  idx.dispose();
  return { x: mixed, yA: y.clone(), yB: yB as tf.Tensor1D, lam };
}

/**
 * 0.8 * KL(teacher || student) + 0.2 * cross-entropy(labels, student).
 *
 * The distillation term is a KL divergence, so identical teacher and
 * student logits contribute exactly zero.
 */
export function distillLoss(studentLogits: tf.Tensor2D, teacherLogits: tf.Tensor2D,
                            labels: tf.Tensor1D, numClasses: number): tf.Scalar {
  return tf.tidy(() => {
    const logStudent = tf.logSoftmax(studentLogits);
    const teacherProbs = tf.softmax(teacherLogits);
    const logTeacher = tf.logSoftmax(teacherLogits);
    const kl = tf.mean(tf.sum(tf.mul(teacherProbs, tf.sub(logTeacher, logStudent)), 1));
    const oneHot = tf.oneHot(labels, numClasses);
    const ce = tf.mean(tf.sum(tf.mul(oneHot, tf.neg(logStudent)), 1));
    return tf.add(tf.mul(kl, 0.8), tf.mul(ce, 0.2)) as tf.Scalar;
  });
}

/** Plain label cross-entropy, optionally blended over mixup label pairs. */
export function mixupCrossEntropy(logits: tf.Tensor2D, yA: tf.Tensor1D, yB: tf.Tensor1D,
                                  lam: number, numClasses: number): tf.Scalar {
  return tf.tidy(() => {
    const logProbs = tf.logSoftmax(logits);
    const ceA = tf.mean(tf.sum(tf.mul(tf.oneHot(yA, numClasses), tf.neg(logProbs)), 1));
    const ceB = tf.mean(tf.sum(tf.mul(tf.oneHot(yB, numClasses), tf.neg(logProbs)), 1));
    return tf.add(tf.mul(ceA, lam), tf.mul(ceB, 1 - lam)) as tf.Scalar;
  });
}
