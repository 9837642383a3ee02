# Data-only package: .ir programs and their .toml manifests.
