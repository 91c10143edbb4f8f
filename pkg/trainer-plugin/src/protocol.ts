/**
 * Wire protocol types (version 1): newline-delimited JSON over stdio.
 *
 * The engine sends eval requests whose candidate payload carries recipe
 * values in file units together with a `units` map, so this plugin needs
 * no access to the engine's space definition.
 */

export const PROTOCOL_VERSION = 1;

export interface StagePayload {
  block: 'conv' | 'mbconv' | 'mbpool' | 'fc' | 'skip';
  kernel: number | null;
  expansion_first: number | null;
  expansion_rest: number | null;
  channels: number;
  depth: number;
  stride: number;
  se: boolean;
  activation: string;
}

export interface ArchPayload {
  resolution: number;
  stages: StagePayload[];
}

export interface RecipePayload {
  lr: number;
  optimizer: 'rmsprop' | 'sgd';
  ema: boolean;
  dropout: number;
  stochastic_depth: number;
  mixup: number;
  weight_decay: number;
}

export interface UnitsPayload {
  lr: number;
  dropout: number;
  stochastic_depth: number;
  mixup: number;
  weight_decay: number;
  lr_sgd_multiplier: number;
}

export interface EvalRequest {
  type: 'eval';
  id: number;
  candidate: { arch: ArchPayload; recipe: RecipePayload; units: UnitsPayload };
  epoch_budget: number;
  seed: number;
}

export interface HelloMessage {
  type: 'hello';
  protocol_version: number;
  capabilities: string[];
}

export interface ProgressMessage {
  type: 'progress';
  id: number;
  epoch: number;
  accuracy: number;
}

export type ResultMessage =
  | { type: 'result'; id: number; curve: number[]; status: 'ok' }
  | { type: 'result'; id: number; status: 'failed'; reason: string };

export function hello(capabilities: string[] = ['train']): HelloMessage {
  return { type: 'hello', protocol_version: PROTOCOL_VERSION, capabilities };
}

export function parseRequest(line: string): EvalRequest {
  let msg: unknown;
  try {
    msg = JSON.parse(line);
  } catch (e) {
    throw new Error(`malformed protocol line: ${line}`);
  }
  const req = msg as EvalRequest;
  if (req.type !== 'eval') throw new Error(`expected eval message, got ${req.type}`);
  if (typeof req.id !== 'number' || typeof req.epoch_budget !== 'number' || req.epoch_budget < 1) {
    throw new Error('eval message missing id/epoch_budget');
  }
  const c = req.candidate;
  if (!c || !c.arch || !Array.isArray(c.arch.stages) || !c.recipe || !c.units) {
    throw new Error('eval message missing candidate fields');
  }
  return req;
}

/** Recipe values converted to real units, SGD learning-rate rule applied. */
export interface AppliedRecipe {
  learningRate: number;
  optimizer: 'rmsprop' | 'sgd';
  ema: boolean;
  emaDecay: number;
  dropout: number;
  stochasticDepth: number;
  mixupAlpha: number;
  weightDecay: number;
}

const EMA_DECAY = 0.999; // small-dataset decay; the engine searches only the on/off flag

export function applyRecipe(recipe: RecipePayload, units: UnitsPayload): AppliedRecipe {
  const lr = recipe.lr * units.lr * (recipe.optimizer === 'sgd' ? units.lr_sgd_multiplier : 1);
  // probability-like knobs are clamped: some space files store ranges whose
  // upper end exceeds 1 in real units
  const clamp01 = (v: number) => Math.min(Math.max(v, 0), 0.9);
  return {
    learningRate: lr,
    optimizer: recipe.optimizer,
    ema: recipe.ema,
    emaDecay: EMA_DECAY,
    dropout: clamp01(recipe.dropout * units.dropout),
    stochasticDepth: clamp01(recipe.stochastic_depth * units.stochastic_depth),
    mixupAlpha: Math.max(recipe.mixup * units.mixup, 0),
    weightDecay: recipe.weight_decay * units.weight_decay,
  };
}
