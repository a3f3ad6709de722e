#include <fstream>

#include <json.hpp>

#include "mixehr/binary_matrix.hpp"
#include "mixehr/error.hpp"
#include "mixehr/trainer.hpp"

namespace mixehr {

namespace fs = std::filesystem;
using nlohmann::json;

void save_checkpoint(const ModelState& model, const fs::path& dir,
                     const std::vector<Vocabulary>* vocabs) {
    model.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create checkpoint directory " + dir.string());

    json meta;
    meta["format_version"] = kCheckpointFormatVersion;
    meta["K"] = model.K;
    meta["T"] = model.num_categories();
    meta["category_names"] = model.category_names;
    meta["vocab_sizes"] = model.vocab_sizes();
    meta["alpha"] = model.alpha;
    meta["eta"] = model.eta;
    meta["tau0"] = model.tau0;
    meta["kappa"] = model.kappa;
    meta["step"] = model.step;
    meta["D_total"] = model.D_total;
    meta["seed"] = model.seed;
    meta["gamma_avg"] = to_string(model.gamma_avg);

    const auto meta_path = dir / "meta.json";
    std::ofstream out(meta_path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + meta_path.string());
    out << meta.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + meta_path.string());

    for (std::size_t t = 0; t < model.num_categories(); ++t)
        write_matrix(dir / ("lambda_" + model.category_names[t] + ".bin"), model.lambda[t]);

    if (vocabs) {
        if (vocabs->size() != model.num_categories())
            throw ValidationError("checkpoint vocabularies do not match the model");
        write_vocab_dir(dir, *vocabs);
    }
}

ModelState load_checkpoint(const fs::path& dir) {
    const auto meta_path = dir / "meta.json";
    std::ifstream in(meta_path);
    if (!in) throw IoError("cannot open checkpoint metadata: " + meta_path.string());

    ModelState m;
    std::vector<std::size_t> sizes;
    try {
        const json meta = json::parse(in);
        const int version = meta.at("format_version").get<int>();
        if (version != kCheckpointFormatVersion)
            throw ValidationError(meta_path.string() + ": unsupported format_version " +
                                  std::to_string(version));
        m.K = meta.at("K").get<std::size_t>();
        m.category_names = meta.at("category_names").get<std::vector<std::string>>();
        sizes = meta.at("vocab_sizes").get<std::vector<std::size_t>>();
        m.alpha = meta.at("alpha").get<double>();
        m.eta = meta.at("eta").get<std::vector<double>>();
        m.tau0 = meta.at("tau0").get<double>();
        m.kappa = meta.at("kappa").get<double>();
        m.step = meta.at("step").get<std::uint64_t>();
        m.D_total = meta.at("D_total").get<std::uint64_t>();
        m.seed = meta.at("seed").get<std::uint64_t>();
        m.gamma_avg = parse_gamma_averaging(meta.value("gamma_avg", std::string("all")));
        if (meta.at("T").get<std::size_t>() != m.category_names.size() ||
            sizes.size() != m.category_names.size())
            throw ValidationError(meta_path.string() + ": category counts disagree");
    } catch (const json::exception& e) {
        throw ValidationError(meta_path.string() + ": malformed metadata: " + e.what());
    }

    for (std::size_t t = 0; t < m.category_names.size(); ++t) {
        const auto path = dir / ("lambda_" + m.category_names[t] + ".bin");
        auto lam = read_matrix(path);
        if (lam.rows != m.K || lam.cols != sizes[t])
            throw ValidationError(path.string() + ": shape " + std::to_string(lam.rows) + "x" +
                                  std::to_string(lam.cols) + " does not match metadata " +
                                  std::to_string(m.K) + "x" + std::to_string(sizes[t]));
        m.lambda.push_back(std::move(lam));
    }
    m.validate();
    return m;
}

std::optional<std::vector<Vocabulary>> load_checkpoint_vocabs(const fs::path& dir) {
    if (!fs::exists(dir / "categories.txt")) return std::nullopt;
    return load_vocab_dir(dir);
}

}  // namespace mixehr
