/** CLI entry: start the bridge with flags for model, port, device, limits. */

import { DEFAULT_CONFIG, createApp } from "./server.js";
import { loadModel } from "./model.js";

function parseArgs(argv: string[]) {
  const config = { ...DEFAULT_CONFIG };
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    switch (key) {
      case "--model":
        config.modelId = value;
        break;
      case "--port":
        config.port = Number(value);
        break;
      case "--device":
        config.device = value;
        break;
      case "--max-beams":
        config.maxBeamWidth = Number(value);
        break;
      case "--max-tokens":
        config.maxTokens = Number(value);
        break;
      case "--sample-rate":
        config.expectedSampleRate = Number(value);
        break;
      default:
        throw new Error(`unknown flag ${key}`);
    }
  }
  return config;
}

function main(): void {
  const config = parseArgs(process.argv.slice(2));
  let model;
  try {
    model = loadModel(config.modelId);
  } catch (err) {
    console.error((err as Error).message);
    process.exit(1);
  }
  const app = createApp(config, model);
  app.listen(config.port, () => {
    console.log(`bridge serving ${config.modelId} on :${config.port} (device=${config.device})`);
  });
}

main();
