import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["test/**/*.test.ts"],
    // the suite builds demo artifacts and drives one live service process
    testTimeout: 120_000,
    hookTimeout: 300_000,
    fileParallelism: false,
  },
});
