#include "snella/io/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace snella {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Reads known keys from one JSON object and rejects everything else.
class Section {
public:
    Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) throw ConfigError(label() + ": expected an object");
    }
    ~Section() = default;

    bool has(const std::string& key) {
        known_.insert(key);
        return doc_.contains(key);
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        try {
            out = doc_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(join(path_, key) + ": wrong type (" + e.what() + ")");
        }
    }

    template <typename T, typename Parse>
    void get_enum(const std::string& key, T& out, Parse parse) {
        std::string name;
        get(key, name);
        if (!doc_.contains(key)) return;
        try {
            out = parse(name);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(join(path_, key) + ": " + e.what());
        }
    }

    template <typename Parse>
    auto get_enum_list(const std::string& key, Parse parse) -> std::vector<decltype(parse(std::string_view{}))> {
        std::vector<std::string> names;
        get(key, names);
        std::vector<decltype(parse(std::string_view{}))> out;
        for (const auto& n : names) {
            try {
                out.push_back(parse(n));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(join(path_, key) + ": " + e.what());
            }
        }
        return out;
    }

    const json& child(const std::string& key) { return doc_.at(key); }
    std::string path(const std::string& key) const { return join(path_, key); }

    void finish() const {
        for (auto it = doc_.begin(); it != doc_.end(); ++it)
            if (!known_.count(it.key())) throw ConfigError(join(path_, it.key()) + ": unknown key");
    }

private:
    std::string label() const { return path_.empty() ? "config" : path_; }

    const json& doc_;
    std::string path_;
    std::set<std::string> known_;
};

template <typename T>
void require(bool ok, const std::string& key, const T& value, const std::string& what) {
    if (!ok) {
        std::ostringstream msg;
        msg << key << ": " << value << " " << what;
        throw ConfigError(msg.str());
    }
}

std::vector<std::string> names_of(const std::vector<KernelKind>& kinds) {
    std::vector<std::string> out;
    for (auto k : kinds) out.emplace_back(kernel_name(k));
    return out;
}

void parse_model(Section& s, DatasetConfig& d) {
    s.get_enum("task", d.kind, parse_task);
    s.get("seed", d.seed);
    s.get("samples", d.samples);
    s.get("input_dim", d.model.input_dim);
    s.get("hidden", d.model.hidden);
    s.get("output_dim", d.model.output_dim);
    s.get_enum("activation", d.model.activation, parse_activation);
    s.get("bias", d.model.bias);
    s.get("attention", d.model.attention);
    s.get("seq", d.model.seq);
    s.get("perturbed_layers", d.perturbed_layers);
    s.get("density", d.density);
    s.get("scale", d.scale);
    s.get("min_rank", d.min_rank);
    s.get("noise", d.noise);
    s.get("classes", d.classes);
    s.get("cluster_spread", d.cluster_spread);
    s.finish();

    require(d.samples > 0, s.path("samples"), d.samples, "must be positive");
    require(d.model.input_dim > 0, s.path("input_dim"), d.model.input_dim, "must be positive");
    require(d.model.output_dim > 0, s.path("output_dim"), d.model.output_dim, "must be positive");
    for (auto h : d.model.hidden) require(h > 0, s.path("hidden"), h, "must be positive");
    require(d.density >= 0.0 && d.density <= 1.0, s.path("density"), d.density, "outside [0, 1]");
    require(d.scale >= 0.0, s.path("scale"), d.scale, "must be >= 0");
    require(d.noise >= 0.0, s.path("noise"), d.noise, "must be >= 0");
    require(d.cluster_spread >= 0.0, s.path("cluster_spread"), d.cluster_spread, "must be >= 0");
    if (d.model.attention) {
        require(d.model.seq > 0 && d.model.input_dim % d.model.seq == 0, s.path("seq"), d.model.seq,
                "must divide input_dim");
    }
    for (auto l : d.perturbed_layers)
        require(l < d.model.layer_count(), s.path("perturbed_layers"), l, "is not a layer index");
    if (d.kind == TaskKind::BlobClassification) {
        require(d.classes >= 2 && d.classes <= d.model.output_dim, s.path("classes"), d.classes,
                "outside [2, output_dim]");
    }
}

void parse_kernel(Section& s, TrainerConfig& t) {
    KernelKind kind = t.kernel.kind;
    std::size_t pieces = t.kernel.pieces;
    s.get_enum("kind", kind, snella::parse_kernel);
    s.get("pieces", pieces);
    s.get("rank", t.rank);
    s.get("init_std", t.init_std);
    s.finish();
    require(t.rank >= 1, s.path("rank"), t.rank, "must be >= 1");
    require(pieces >= 1 && pieces <= t.rank, s.path("pieces"), pieces, "outside [1, rank]");
    require(t.init_std > 0.0, s.path("init_std"), t.init_std, "must be positive");
    t.kernel = KernelSpec::make(kind, pieces);
}

void parse_sparsity(Section& s, TrainerConfig& t) {
    s.get("budget_ratio", t.budget_ratio);
    s.get_enum("schedule", t.schedule, parse_schedule);
    s.get("schedule_steps", t.schedule_steps);
    s.get_enum("metric", t.metric, parse_metric);
    s.get("beta1", t.importance_beta1);
    s.get("beta2", t.importance_beta2);
    s.get_enum("period", t.period, parse_period);
    s.get_enum("mode", t.mode, parse_sparsify_mode);
    s.finish();
    require(t.budget_ratio >= 0.0 && t.budget_ratio <= 1.0, s.path("budget_ratio"), t.budget_ratio, "outside [0, 1]");
    require(t.schedule_steps >= 0, s.path("schedule_steps"), t.schedule_steps, "must be >= 0");
    require(t.importance_beta1 >= 0.0 && t.importance_beta1 <= 1.0, s.path("beta1"), t.importance_beta1,
            "outside [0, 1]");
    require(t.importance_beta2 >= 0.0 && t.importance_beta2 <= 1.0, s.path("beta2"), t.importance_beta2,
            "outside [0, 1]");
}

void parse_train(Section& s, TrainerConfig& t) {
    s.get("lr", t.adam.lr);
    s.get("adam_beta1", t.adam.beta1);
    s.get("adam_beta2", t.adam.beta2);
    s.get("adam_eps", t.adam.eps);
    s.get("epochs", t.epochs);
    s.get("steps_per_epoch", t.steps_per_epoch);
    s.get("batch_size", t.batch_size);
    s.get("seed", t.seed);
    s.get("recompute_merge", t.recompute_merge);
    s.finish();
    require(t.adam.lr > 0.0 && std::isfinite(t.adam.lr), s.path("lr"), t.adam.lr, "must be positive");
    require(t.adam.beta1 >= 0.0 && t.adam.beta1 < 1.0, s.path("adam_beta1"), t.adam.beta1, "outside [0, 1)");
    require(t.adam.beta2 >= 0.0 && t.adam.beta2 < 1.0, s.path("adam_beta2"), t.adam.beta2, "outside [0, 1)");
    require(t.adam.eps > 0.0, s.path("adam_eps"), t.adam.eps, "must be positive");
    require(t.epochs >= 0, s.path("epochs"), t.epochs, "must be >= 0");
    require(t.steps_per_epoch >= 1, s.path("steps_per_epoch"), t.steps_per_epoch, "must be >= 1");
    require(t.batch_size >= 1, s.path("batch_size"), t.batch_size, "must be >= 1");
}

void parse_experiments(Section& s, ExperimentSettings& e) {
    s.get("run", e.run);
    for (const auto& name : e.run) {
        const auto& known = experiment_names();
        if (std::find(known.begin(), known.end(), name) == known.end()) {
            throw ConfigError(s.path("run") + ": unknown experiment '" + name + "'");
        }
    }
    s.get("seed", e.seed);
    s.get("seeds", e.seeds);
    s.get("parallel", e.parallel);
    require(e.seeds >= 1, s.path("seeds"), e.seeds, "must be >= 1");

    if (s.has("fit_matrix")) {
        Section f(s.child("fit_matrix"), s.path("fit_matrix"));
        auto& c = e.fit_matrix;
        f.get("seeds", c.seeds);
        f.get("m", c.m);
        f.get("n", c.n);
        f.get("rank", c.rank);
        f.get("target_rank", c.target_rank);
        f.get("density", c.density);
        if (f.has("kernels")) c.kernels = f.get_enum_list("kernels", snella::parse_kernel);
        f.get("pieces", c.pieces);
        f.get("steps", c.steps);
        f.get("lr", c.lr);
        f.get("init_std", c.init_std);
        f.finish();
        require(c.m > 0 && c.n > 0, f.path("m"), c.m, "dims must be positive");
        require(c.rank >= 1 && c.rank <= std::min(c.m, c.n), f.path("rank"), c.rank, "outside [1, min(m, n)]");
        require(c.target_rank <= std::min(c.m, c.n), f.path("target_rank"), c.target_rank, "exceeds min(m, n)");
        require(c.density > 0.0 && c.density <= 1.0, f.path("density"), c.density, "outside (0, 1]");
        require(c.pieces >= 1 && c.pieces <= c.rank, f.path("pieces"), c.pieces, "outside [1, rank]");
        require(c.steps >= 0, f.path("steps"), c.steps, "must be >= 0");
        require(c.lr > 0.0, f.path("lr"), c.lr, "must be positive");
        require(c.init_std > 0.0, f.path("init_std"), c.init_std, "must be positive");
    }
    if (s.has("grad_evolution")) {
        Section g(s.child("grad_evolution"), s.path("grad_evolution"));
        auto& c = e.grad_evolution;
        g.get("seeds", c.seeds);
        g.get("m", c.m);
        g.get("n", c.n);
        g.get("rank", c.rank);
        if (g.has("kernels")) c.kernels = g.get_enum_list("kernels", snella::parse_kernel);
        g.get("scale", c.scale);
        g.get("steps", c.steps);
        g.get("lr", c.lr);
        g.finish();
        require(c.rank >= 1 && c.rank <= std::min(c.m, c.n), g.path("rank"), c.rank, "outside [1, min(m, n)]");
        require(c.scale > 0.0, g.path("scale"), c.scale, "must be positive");
        require(c.steps >= 1, g.path("steps"), c.steps, "must be >= 1");
        require(c.lr > 0.0, g.path("lr"), c.lr, "must be positive");
    }
    if (s.has("rank_sweep")) {
        Section r(s.child("rank_sweep"), s.path("rank_sweep"));
        auto& c = e.rank_sweep;
        r.get("seeds", c.seeds);
        r.get("m", c.m);
        r.get("n", c.n);
        r.get("ranks", c.ranks);
        if (r.has("kernels")) c.kernels = r.get_enum_list("kernels", snella::parse_kernel);
        r.finish();
        for (auto k : c.ranks)
            require(k >= 1 && k <= std::min(c.m, c.n), r.path("ranks"), k, "outside [1, min(m, n)]");
    }
    if (s.has("schedule")) {
        Section q(s.child("schedule"), s.path("schedule"));
        auto& c = e.schedule;
        q.get("initial", c.initial);
        q.get("final", c.final);
        q.get("steps", c.steps);
        q.get("samples", c.samples);
        q.finish();
        require(c.final >= 0 && c.final <= c.initial, q.path("final"), c.final, "outside [0, initial]");
        require(c.steps >= 1, q.path("steps"), c.steps, "must be >= 1");
        require(c.samples >= 2, q.path("samples"), c.samples, "must be >= 2");
    }
    if (s.has("memory_model")) {
        Section mm(s.child("memory_model"), s.path("memory_model"));
        auto& c = e.memory_model;
        mm.get("m", c.m);
        mm.get("n", c.n);
        mm.get("layers", c.layers);
        mm.get("rank", c.rank);
        mm.get_enum("kernel", c.kernel, snella::parse_kernel);
        mm.finish();
        require(c.m > 0 && c.n > 0 && c.layers > 0, mm.path("m"), c.m, "dims must be positive");
    }
    if (s.has("train")) {
        Section t(s.child("train"), s.path("train"));
        t.get("seeds", e.train.seeds);
        if (t.has("kernels")) e.train.kernels = t.get_enum_list("kernels", snella::parse_kernel);
        t.finish();
        require(!e.train.kernels.empty(), t.path("kernels"), "[]", "must name at least one kernel");
    }
    if (s.has("grad_check")) {
        Section g(s.child("grad_check"), s.path("grad_check"));
        auto& c = e.grad_check;
        g.get("m", c.m);
        g.get("n", c.n);
        g.get("rank", c.rank);
        g.get("instances", c.instances);
        g.get("step", c.step);
        g.get("tol", c.tol);
        g.finish();
        require(c.rank >= 1 && c.rank <= std::min(c.m, c.n), g.path("rank"), c.rank, "outside [1, min(m, n)]");
        require(c.step > 0.0, g.path("step"), c.step, "must be positive");
        require(c.tol > 0.0, g.path("tol"), c.tol, "must be positive");
    }
    if (s.has("assertions")) {
        const json& list = s.child("assertions");
        if (!list.is_array()) throw ConfigError(s.path("assertions") + ": expected an array");
        for (std::size_t i = 0; i < list.size(); ++i) {
            Section a(list[i], s.path("assertions") + "[" + std::to_string(i) + "]");
            Assertion as;
            a.get("experiment", as.experiment);
            a.get("metric", as.metric);
            a.get("op", as.op);
            a.get("value", as.value);
            a.get("tol", as.tol);
            a.finish();
            static const std::set<std::string> ops{"<", "<=", ">", ">=", "==", "~="};
            require(ops.count(as.op) == 1, a.path("op"), as.op, "is not a comparison");
            const auto& known = experiment_names();
            require(std::find(known.begin(), known.end(), as.experiment) != known.end(), a.path("experiment"),
                    as.experiment, "is not an experiment");
            require(!as.metric.empty(), a.path("metric"), "\"\"", "must name a metric");
        }
        for (std::size_t i = 0; i < list.size(); ++i) {
            Assertion as;
            as.experiment = list[i].value("experiment", "");
            as.metric = list[i].value("metric", "");
            as.op = list[i].value("op", "");
            as.value = list[i].value("value", 0.0);
            as.tol = list[i].value("tol", 0.0);
            e.assertions.push_back(as);
        }
    }
    s.finish();
}

}  // namespace

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"fit-matrix", "grad-evolution", "rank-sweep", "train",
                                                "alloc-trace", "schedule",       "memory-model", "grad-check"};
    return names;
}

std::int64_t adaptable_weights(const ModelSpec& model) {
    model.validate();
    std::int64_t total = 0;
    if (model.attention) {
        const auto d = static_cast<std::int64_t>(model.input_dim / model.seq);
        total += 4 * d * d;
    }
    std::size_t in = model.input_dim;
    for (auto h : model.hidden) {
        total += static_cast<std::int64_t>(h * in);
        in = h;
    }
    return total + static_cast<std::int64_t>(model.output_dim * in);
}

std::int64_t RunConfig::final_budget() const {
    return std::llround(trainer.budget_ratio * static_cast<double>(adaptable_weights(data.model)));
}

RunConfig parse_config(const json& doc) {
    RunConfig cfg;
    Section root(doc, "");
    if (root.has("model")) {
        Section s(root.child("model"), "model");
        parse_model(s, cfg.data);
    }
    if (root.has("kernel")) {
        Section s(root.child("kernel"), "kernel");
        parse_kernel(s, cfg.trainer);
    }
    if (root.has("sparsity")) {
        Section s(root.child("sparsity"), "sparsity");
        parse_sparsity(s, cfg.trainer);
    }
    if (root.has("train")) {
        Section s(root.child("train"), "train");
        parse_train(s, cfg.trainer);
    }
    if (root.has("experiments")) {
        Section s(root.child("experiments"), "experiments");
        parse_experiments(s, cfg.experiments);
    }
    root.finish();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": malformed JSON (" + e.what() + ")");
    }
    return parse_config(doc);
}

json to_json(const RunConfig& c) {
    const auto& d = c.data;
    const auto& t = c.trainer;
    const auto& e = c.experiments;
    json assertions = json::array();
    for (const auto& a : e.assertions)
        assertions.push_back({{"experiment", a.experiment}, {"metric", a.metric}, {"op", a.op}, {"value", a.value},
                              {"tol", a.tol}});
    return {
        {"model",
         {{"task", task_name(d.kind)},
          {"seed", d.seed},
          {"samples", d.samples},
          {"input_dim", d.model.input_dim},
          {"hidden", d.model.hidden},
          {"output_dim", d.model.output_dim},
          {"activation", activation_name(d.model.activation)},
          {"bias", d.model.bias},
          {"attention", d.model.attention},
          {"seq", d.model.seq},
          {"perturbed_layers", d.perturbed_layers},
          {"density", d.density},
          {"scale", d.scale},
          {"min_rank", d.min_rank},
          {"noise", d.noise},
          {"classes", d.classes},
          {"cluster_spread", d.cluster_spread}}},
        {"kernel",
         {{"kind", kernel_name(t.kernel.kind)},
          {"pieces", t.kernel.pieces},
          {"rank", t.rank},
          {"init_std", t.init_std}}},
        {"sparsity",
         {{"budget_ratio", t.budget_ratio},
          {"schedule", schedule_name(t.schedule)},
          {"schedule_steps", t.schedule_steps},
          {"metric", metric_name(t.metric)},
          {"beta1", t.importance_beta1},
          {"beta2", t.importance_beta2},
          {"period", period_name(t.period)},
          {"mode", sparsify_mode_name(t.mode)}}},
        {"train",
         {{"lr", t.adam.lr},
          {"adam_beta1", t.adam.beta1},
          {"adam_beta2", t.adam.beta2},
          {"adam_eps", t.adam.eps},
          {"epochs", t.epochs},
          {"steps_per_epoch", t.steps_per_epoch},
          {"batch_size", t.batch_size},
          {"seed", t.seed},
          {"recompute_merge", t.recompute_merge}}},
        {"experiments",
         {{"run", e.run},
          {"seed", e.seed},
          {"seeds", e.seeds},
          {"parallel", e.parallel},
          {"fit_matrix",
           {{"seeds", e.fit_matrix.seeds},
            {"m", e.fit_matrix.m},
            {"n", e.fit_matrix.n},
            {"rank", e.fit_matrix.rank},
            {"target_rank", e.fit_matrix.target_rank},
            {"density", e.fit_matrix.density},
            {"kernels", names_of(e.fit_matrix.kernels)},
            {"pieces", e.fit_matrix.pieces},
            {"steps", e.fit_matrix.steps},
            {"lr", e.fit_matrix.lr},
            {"init_std", e.fit_matrix.init_std}}},
          {"grad_evolution",
           {{"seeds", e.grad_evolution.seeds},
            {"m", e.grad_evolution.m},
            {"n", e.grad_evolution.n},
            {"rank", e.grad_evolution.rank},
            {"kernels", names_of(e.grad_evolution.kernels)},
            {"scale", e.grad_evolution.scale},
            {"steps", e.grad_evolution.steps},
            {"lr", e.grad_evolution.lr}}},
          {"rank_sweep",
           {{"seeds", e.rank_sweep.seeds},
            {"m", e.rank_sweep.m},
            {"n", e.rank_sweep.n},
            {"ranks", e.rank_sweep.ranks},
            {"kernels", names_of(e.rank_sweep.kernels)}}},
          {"schedule",
           {{"initial", e.schedule.initial},
            {"final", e.schedule.final},
            {"steps", e.schedule.steps},
            {"samples", e.schedule.samples}}},
          {"memory_model",
           {{"m", e.memory_model.m},
            {"n", e.memory_model.n},
            {"layers", e.memory_model.layers},
            {"rank", e.memory_model.rank},
            {"kernel", kernel_name(e.memory_model.kernel)}}},
          {"train", {{"seeds", e.train.seeds}, {"kernels", names_of(e.train.kernels)}}},
          {"grad_check",
           {{"m", e.grad_check.m},
            {"n", e.grad_check.n},
            {"rank", e.grad_check.rank},
            {"instances", e.grad_check.instances},
            {"step", e.grad_check.step},
            {"tol", e.grad_check.tol}}},
          {"assertions", assertions}}},
    };
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_json(config).dump(2) << '\n';
}

}  // namespace snella
