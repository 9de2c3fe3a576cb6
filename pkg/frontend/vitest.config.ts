import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // the flow suite spawns the real job service and runs edits against it
    testTimeout: 180_000,
    hookTimeout: 120_000,
  },
});
