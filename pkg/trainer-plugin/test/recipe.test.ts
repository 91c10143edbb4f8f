import * as tf from '@tensorflow/tfjs';
import { describe, expect, it } from 'vitest';

import { applyRecipe, RecipePayload, UnitsPayload } from '../src/protocol.js';
import { distillLoss, emaScalarUpdate, emaUpdate, mixupBatch, mixupCrossEntropy } from '../src/recipe.js';
import { mulberry32 } from '../src/rng.js';

const UNITS: UnitsPayload = {
  lr: 1e-3, dropout: 1e-2, stochastic_depth: 1e-1, mixup: 1e-1,
  weight_decay: 1e-6, lr_sgd_multiplier: 4,
};

describe('ema update', () => {
  it('matches the direct formula exactly', () => {
    expect(emaScalarUpdate([0], [1], 0.999)[0]).toBeCloseTo(0.001, 14);
  });

  it('alpha = 1 leaves the average unchanged', () => {
    expect(emaScalarUpdate([0.25, -2], [9, 9], 1.0)).toEqual([0.25, -2]);
  });

  it('n constant steps match the closed form to 1e-12', () => {
    const alpha = 0.97;
    const ema0 = 0.4;
    const w = 1.25;
    const n = 40;
    let ema = [ema0];
    for (let i = 0; i < n; i++) {
      ema = emaScalarUpdate(ema, [w], alpha);
    }
    const expected = Math.pow(alpha, n) * ema0 + (1 - Math.pow(alpha, n)) * w;
    expect(Math.abs(ema[0] - expected)).toBeLessThan(1e-12);
  });

  it('tensor update applies the same arithmetic at float32 precision', async () => {
    const out = emaUpdate([tf.tensor1d([0])], [tf.tensor1d([1])], 0.999);
    expect((await out[0].data())[0]).toBeCloseTo(0.001, 7);
  });
});

describe('mixup', () => {
  it('alpha <= 0 returns the batch unchanged', async () => {
    const x = tf.randomUniform([4, 2, 2, 3]) as tf.Tensor4D;
    const y = tf.tensor1d([0, 1, 2, 3], 'int32');
    const mixed = mixupBatch(x, y, 0, mulberry32(1));
    expect(mixed.lam).toBe(1);
    expect(Array.from(await mixed.x.data())).toEqual(Array.from(await x.data()));
  });

  it('mixed pixels stay inside the convex hull of the inputs', async () => {
    const rng = mulberry32(7);
    for (let trial = 0; trial < 20; trial++) {
      const x = tf.randomUniform([6, 4, 4, 3], 0, 1) as tf.Tensor4D;
      const y = tf.tensor1d([0, 1, 2, 3, 0, 1], 'int32');
      const mixed = mixupBatch(x, y, 0.4 + 2 * rng(), rng);
      const data = await mixed.x.data();
      for (const v of data) {
        expect(v).toBeGreaterThanOrEqual(-1e-6);
        expect(v).toBeLessThanOrEqual(1 + 1e-6);
      }
      expect(mixed.lam).toBeGreaterThan(0);
      expect(mixed.lam).toBeLessThan(1);
      x.dispose(); y.dispose(); mixed.x.dispose(); mixed.yA.dispose(); mixed.yB.dispose();
    }
  });

  it('lambda = 1 reproduces the first operand; lambda = 0.5 the mean', async () => {
    // direct check of the blend arithmetic used by mixupBatch (float32)
    const a = tf.tensor1d([0.2, 0.8]);
    const b = tf.tensor1d([0.9, 0.1]);
    const blend = Array.from(await tf.add(tf.mul(a, 1.0), tf.mul(b, 0.0)).data());
    expect(blend[0]).toBeCloseTo(0.2, 6);
    expect(blend[1]).toBeCloseTo(0.8, 6);
    const mean = Array.from(await tf.add(tf.mul(a, 0.5), tf.mul(b, 0.5)).data());
    expect(mean[0]).toBeCloseTo(0.55, 6);
    expect(mean[1]).toBeCloseTo(0.45, 6);
  });
});

describe('distillation loss', () => {
  it('equal teacher and student logits leave only the label term', async () => {
    const logits = tf.tensor2d([[2, -1], [0.5, 0.5]]) as tf.Tensor2D;
    const labels = tf.tensor1d([0, 1], 'int32');
    const total = distillLoss(logits, logits, labels, 2);
    const ceOnly = mixupCrossEntropy(logits, labels, labels, 1, 2);
    expect((await total.data())[0]).toBeCloseTo(0.2 * (await ceOnly.data())[0], 6);
  });

  it('matches a hand-computed two-class case', async () => {
    const student = tf.tensor2d([[Math.log(0.7), Math.log(0.3)]]) as tf.Tensor2D;
    const teacher = tf.tensor2d([[Math.log(0.6), Math.log(0.4)]]) as tf.Tensor2D;
    const labels = tf.tensor1d([0], 'int32');
    const kl = 0.6 * Math.log(0.6 / 0.7) + 0.4 * Math.log(0.4 / 0.3);
    const ce = -Math.log(0.7);
    const expected = 0.8 * kl + 0.2 * ce;
    const got = (await distillLoss(student, teacher, labels, 2).data())[0];
    expect(got).toBeCloseTo(expected, 6);
  });

  it('weights sum to one', () => {
    expect(0.8 + 0.2).toBe(1.0);
  });
});

describe('recipe application', () => {
  const recipe: RecipePayload = {
    lr: 26, optimizer: 'rmsprop', ema: true, dropout: 17,
    stochastic_depth: 9, mixup: 19, weight_decay: 7,
  };

  it('converts file units to real values', () => {
    const applied = applyRecipe(recipe, UNITS);
    expect(applied.learningRate).toBeCloseTo(0.026, 12);
    expect(applied.dropout).toBeCloseTo(0.17, 12);
    expect(applied.weightDecay).toBeCloseTo(7e-6, 18);
  });

  it('multiplies the learning rate by 4 for sgd', () => {
    const applied = applyRecipe({ ...recipe, optimizer: 'sgd' }, UNITS);
    expect(applied.learningRate).toBeCloseTo(0.104, 12);
  });

  it('clamps probability-like knobs from out-of-range file units', () => {
    const applied = applyRecipe({ ...recipe, stochastic_depth: 31 }, UNITS);
    expect(applied.stochasticDepth).toBe(0.9);
  });
});
