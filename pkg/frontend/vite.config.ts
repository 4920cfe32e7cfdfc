import { defineConfig } from 'vite';

export default defineConfig({
  // the backend serves index.html at / and mounts <dist>/assets at /assets
  base: '/',
  build: {
    outDir: 'dist',
  },
  server: {
    proxy: {
      '/ws': {
        target: 'ws://127.0.0.1:8765',
        ws: true,
      },
    },
  },
});
