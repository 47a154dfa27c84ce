#include "snella/model/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "snella/kernels/analysis.hpp"

namespace snella {

using ad::Tensor;

std::string_view task_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::HighRankRegression: return "high-rank-regression";
        case TaskKind::BlobClassification: return "blob-classification";
    }
    return "?";
}

TaskKind parse_task(std::string_view name) {
    for (auto k : {TaskKind::HighRankRegression, TaskKind::BlobClassification})
        if (task_name(k) == name) return k;
    throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

void DatasetConfig::validate() const {
    model.validate();
    if (samples == 0) throw std::invalid_argument("dataset needs at least one sample");
    if (density < 0.0 || density > 1.0) throw std::invalid_argument("perturbation density must lie in [0, 1]");
    if (scale < 0.0 || noise < 0.0 || cluster_spread < 0.0) throw std::invalid_argument("negative scale");
    if (kind == TaskKind::BlobClassification && (classes < 2 || classes > model.output_dim)) {
        throw std::invalid_argument("classes must lie in [2, output_dim]");
    }
    for (auto l : perturbed_layers)
        if (l >= model.layer_count()) throw std::invalid_argument("perturbed layer index out of range");
}

namespace {

Tensor sparse_perturbation(std::size_t m, std::size_t n, const DatasetConfig& cfg, std::mt19937_64& rng) {
    if (cfg.density == 0.0 || cfg.scale == 0.0) return Tensor::zeros({m, n});
    std::bernoulli_distribution keep(cfg.density);
    std::normal_distribution<double> value(0.0, cfg.scale / std::sqrt(static_cast<double>(n)));
    for (int attempt = 0; attempt < 200; ++attempt) {
        Tensor p({m, n});
        for (double& v : p.data()) v = keep(rng) ? value(rng) : 0.0;
        if (numerical_rank(p) > std::min({cfg.min_rank, m - 1, n - 1})) return p;
    }
    throw std::runtime_error("could not draw a perturbation of rank > " + std::to_string(cfg.min_rank) +
                             "; raise the density");
}

}  // namespace

Dataset synth_dataset(const DatasetConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    Dataset ds;
    ds.kind = config.kind;
    ds.model = config.model;
    ds.base = BaseWeights::random(config.model, rng);

    const std::size_t N = config.samples, d = config.model.input_dim, k = config.model.output_dim;
    std::normal_distribution<double> normal(0.0, 1.0);

    if (config.kind == TaskKind::HighRankRegression) {
        ds.inputs = Tensor({N, d});
        for (double& v : ds.inputs.data()) v = normal(rng);

        BaseWeights target = ds.base;
        for (std::size_t l = 0; l < ds.base.W.size(); ++l) {
            const bool selected = config.perturbed_layers.empty() ||
                                  std::find(config.perturbed_layers.begin(), config.perturbed_layers.end(), l) !=
                                      config.perturbed_layers.end();
            const auto& W = ds.base.W[l];
            ds.perturbations.push_back(selected ? sparse_perturbation(W.dim(0), W.dim(1), config, rng)
                                                : Tensor::zeros(W.shape()));
            for (std::size_t i = 0; i < W.size(); ++i) target.W[l][i] += ds.perturbations[l][i];
        }
        // Labels from the target model: same architecture, no adapters.
        std::mt19937_64 unused(0);
        TinyModel teacher(config.model, target, KernelSpec::make(KernelKind::Linear), 1, unused, 1.0);
        ds.targets = teacher.predict_base(ds.inputs);
        if (config.noise > 0.0) {
            std::normal_distribution<double> eps(0.0, config.noise);
            for (double& v : ds.targets.data()) v += eps(rng);
        }
        return ds;
    }

    Tensor centers({config.classes, d});
    for (double& v : centers.data()) v = normal(rng);
    ds.inputs = Tensor({N, d});
    ds.targets = Tensor::zeros({N, k});
    std::uniform_int_distribution<std::size_t> pick(0, config.classes - 1);
    std::normal_distribution<double> jitter(0.0, config.cluster_spread);
    for (std::size_t s = 0; s < N; ++s) {
        const std::size_t c = pick(rng);
        ds.labels.push_back(c);
        ds.targets.at(s, c) = 1.0;
        for (std::size_t j = 0; j < d; ++j) ds.inputs.at(s, j) = centers.at(c, j) + jitter(rng);
    }
    for (const auto& W : ds.base.W) ds.perturbations.push_back(Tensor::zeros(W.shape()));
    return ds;
}

}  // namespace snella
