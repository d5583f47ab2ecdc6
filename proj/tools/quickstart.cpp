// Copyright 2026 The R2SNet Authors
// SPDX-License-Identifier: Apache-2.0

// Library walk-through: synthesize a small benchmark, train the desk-sized
// model for a few epochs and compare it with plain NMS.

#include <cstdio>

#include "r2s/r2s.hpp"

int main() {
    using namespace r2s;
    BenchmarkSpec spec;
    spec.scenes.images = 60;
    spec.scenes.seed = 1;
    spec.noise.seed = 2;
    spec.noise.label_flip_prob = 0.3;
    const Benchmark bench = make_benchmark(spec);
    const auto index = bench.index();

    auto cfg = R2SNetConfig::desk();
    TrainConfig tc;
    tc.grid = cfg.bfnet.grid;
    tc.epochs = 30;
    const auto samples = build_samples<float>(bench.dataset, bench.train, &index, cfg, tc.rho_iou);
    Model<float> model = Model<float>::make(cfg, tc.seed);
    pretrain_bfnet(model, samples, tc);
    const auto history = train_r2snet(model, samples, tc);
    std::printf("final training loss %.3f\n", history.back().train_loss);

    const auto& classes = bench.dataset.classes;
    const auto baseline = evaluate(baseline_detections(bench.test, index), classes);
    const auto refined = evaluate(refined_detections(model, bench.dataset, bench.test, index, {}), classes);
    std::printf("%s", comparison_csv({{"baseline", baseline}, {"refined", refined}}).c_str());
}
