import { readFileSync } from 'node:fs';
import { fileURLToPath } from 'node:url';
import { dirname, join } from 'node:path';

import * as tf from '@tensorflow/tfjs';
import { describe, expect, it } from 'vitest';

import { buildNetwork, midChannels, seChannels } from '../src/network.js';
import type { ArchPayload } from '../src/protocol.js';

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), '..', 'fixtures');

interface Golden {
  arch: ArchPayload;
  params: number;
  flops: number;
}

const goldens: Golden[] = JSON.parse(readFileSync(join(FIXTURES, 'param_goldens.json'), 'utf8'));

describe('parameter parity with the engine cost model', () => {
  it('matches every golden architecture exactly', () => {
    for (const [i, golden] of goldens.entries()) {
      const net = buildNetwork(golden.arch, { seed: i });
      const counted = net.countTrainableParams();
      net.dispose();
      expect(counted, `golden ${i}`).toBe(golden.params);
    }
  });
});

describe('building blocks', () => {
  it('rounds SE widths like the cost model', () => {
    expect(seChannels(16)).toBe(8);
    expect(seChannels(56)).toBe(16);
    expect(seChannels(8)).toBe(8);
  });

  it('rounds expanded widths like the cost model', () => {
    expect(midChannels(5.46, 24)).toBe(131);
    expect(midChannels(1, 16)).toBe(16);
  });

  it('builds a depth-1 single-stage toy network and classifies a batch', () => {
    const arch: ArchPayload = {
      resolution: 32,
      stages: [
        { block: 'conv', kernel: 3, expansion_first: null, expansion_rest: null, channels: 8, depth: 1, stride: 2, se: false, activation: 'hswish' },
        { block: 'fc', kernel: null, expansion_first: null, expansion_rest: null, channels: 4, depth: 1, stride: 1, se: false, activation: 'none' },
      ],
    };
    const net = buildNetwork(arch, { seed: 1 });
    const x = tf.zeros([2, 32, 32, 3]) as tf.Tensor4D;
    const logits = net.forward(x, false);
    expect(logits.shape).toEqual([2, 4]);
    x.dispose();
    logits.dispose();
    net.dispose();
  });

  it('replaces the second stride-two stage for low-resolution inputs', () => {
    const stage = (stride: number) => ({
      block: 'mbconv' as const, kernel: 3, expansion_first: 2, expansion_rest: 2,
      channels: 8, depth: 1, stride, se: false, activation: 'hswish',
    });
    const arch: ArchPayload = {
      resolution: 224,
      stages: [
        { block: 'conv', kernel: 3, expansion_first: null, expansion_rest: null, channels: 8, depth: 1, stride: 2, se: false, activation: 'hswish' },
        stage(2), stage(2), stage(2),
        { block: 'fc', kernel: null, expansion_first: null, expansion_rest: null, channels: 4, depth: 1, stride: 1, se: false, activation: 'none' },
      ],
    };
    const net = buildNetwork(arch, { inputResolution: 32, seed: 0 });
    const x = tf.zeros([1, 32, 32, 3]) as tf.Tensor4D;
    // stride product with the replacement is 2*2*1*2 = 8 -> no crash on 32px
    const logits = net.forward(x, false);
    expect(logits.shape).toEqual([1, 4]);
    // parameters must not depend on the input resolution
    const netFull = buildNetwork(arch, { seed: 0 });
    expect(net.countTrainableParams()).toBe(netFull.countTrainableParams());
    x.dispose();
    logits.dispose();
    net.dispose();
    netFull.dispose();
  });

  it('rejects architectures without a classifier stage', () => {
    const arch: ArchPayload = {
      resolution: 32,
      stages: [
        { block: 'conv', kernel: 3, expansion_first: null, expansion_rest: null, channels: 8, depth: 1, stride: 2, se: false, activation: 'hswish' },
      ],
    };
    expect(() => buildNetwork(arch)).toThrow(/fc stage/);
  });
});
