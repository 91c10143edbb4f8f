/**
 * Wire-protocol entry point: hello on startup, then one eval at a time
 * from stdin, streaming per-epoch progress and a final result on stdout.
 * SIGTERM mid-request produces a clean failed result before exiting.
 */
import * as readline from 'node:readline';

import { initBackend } from './backend.js';
import { hello, parseRequest, ProgressMessage, ResultMessage } from './protocol.js';
import { runEval } from './train.js';

function emit(msg: object): void {
  process.stdout.write(JSON.stringify(msg) + '\n');
}

async function main(): Promise<void> {
  await initBackend();
  emit(hello());
  let inFlight: number | null = null;

  process.on('SIGTERM', () => {
    if (inFlight !== null) {
      emit({ type: 'result', id: inFlight, status: 'failed', reason: 'terminated' } as ResultMessage);
    }
    process.exit(0);
  });

  // dataset sizes are overridable so integration tests stay quick
  const trainSize = Number(process.env.PLUGIN_TRAIN_SIZE ?? 500);
  const valSize = Number(process.env.PLUGIN_VAL_SIZE ?? 100);

  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  for await (const line of rl) {
    if (!line.trim()) continue;
    let id = -1;
    try {
      const request = parseRequest(line);
      id = request.id;
      inFlight = id;
      const run = await runEval(request, {
        trainSize,
        valSize,
        onEpoch: (epoch, accuracy) =>
          emit({ type: 'progress', id, epoch, accuracy } as ProgressMessage),
      });
      emit({ type: 'result', id, curve: run.curve, status: 'ok' } as ResultMessage);
    } catch (err) {
      emit({
        type: 'result', id, status: 'failed',
        reason: err instanceof Error ? err.message : String(err),
      } as ResultMessage);
    } finally {
      inFlight = null;
    }
  }
}

main().catch((err) => {
  process.stderr.write(`fatal: ${err}\n`);
  process.exit(1);
});
