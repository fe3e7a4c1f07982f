import { defineConfig } from 'vitest/config'

export default defineConfig({
  test: {
    environment: 'jsdom',
    // the live-service test boots a Python server, so hooks get headroom
    testTimeout: 30000,
    hookTimeout: 60000,
  },
})
