// typescript and vitest come from the sandbox's global install; only jsdom
// is a local dependency, so this config avoids importing vitest/config.
export default {
  test: {
    environment: "jsdom",
  },
};
