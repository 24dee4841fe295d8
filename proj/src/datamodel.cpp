#include "ici/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "ici/rng.hpp"

namespace ici::data {

namespace {

void validate_store(const FeatureStore& s, const std::string& origin) {
    if (s.features.rows() != static_cast<Eigen::Index>(s.labels.size())) {
        throw DataError(origin + ": feature/label row count mismatch");
    }
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
        if (s.labels[i] < 0 || s.labels[i] >= s.class_count) {
            throw DataError(origin + ": label out of range at row " + std::to_string(i));
        }
    }
    if (!s.features.allFinite()) {
        for (Eigen::Index i = 0; i < s.features.rows(); ++i) {
            for (Eigen::Index j = 0; j < s.features.cols(); ++j) {
                if (!std::isfinite(s.features(i, j))) {
                    throw DataError(origin + ": non-finite feature at row " +
                                    std::to_string(i) + ", column " + std::to_string(j));
                }
            }
        }
    }
}

/// Remaps raw label ids to contiguous 0..c-1 preserving first-appearance order.
int remap_labels(IntVector& labels) {
    std::unordered_map<int, int> seen;
    for (int& l : labels) {
        auto [it, inserted] = seen.emplace(l, static_cast<int>(seen.size()));
        l = it->second;
    }
    return static_cast<int>(seen.size());
}

FeatureStore load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());

    std::string header;
    if (!std::getline(in, header)) throw DataError(path.string() + ": no rows");
    if (!header.empty() && header.back() == '\r') header.pop_back();

    std::vector<std::string> cols;
    {
        std::stringstream ss(header);
        std::string tok;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
    }
    if (cols.empty() || cols[0] != "label") {
        throw DataError(path.string() + ": header must start with 'label' column");
    }
    const std::size_t d = cols.size() - 1;
    if (d == 0) throw DataError(path.string() + ": no feature columns in header");
    for (std::size_t j = 0; j < d; ++j) {
        if (cols[j + 1] != "f" + std::to_string(j)) {
            throw DataError(path.string() + ": malformed header, expected f" +
                            std::to_string(j) + " got '" + cols[j + 1] + "'");
        }
    }

    std::vector<double> values;
    IntVector labels;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::size_t field = 0;
        while (std::getline(ss, tok, ',')) {
            std::size_t pos = 0;
            double v;
            try {
                v = std::stod(tok, &pos);
            } catch (const std::exception&) {
                throw DataError(path.string() + ": line " + std::to_string(lineno) +
                                ", field " + std::to_string(field) + ": not a number");
            }
            if (pos != tok.size()) {
                throw DataError(path.string() + ": line " + std::to_string(lineno) +
                                ", field " + std::to_string(field) + ": trailing junk");
            }
            if (field == 0) {
                if (v != std::floor(v)) {
                    throw DataError(path.string() + ": line " + std::to_string(lineno) +
                                    ": label must be an integer");
                }
                labels.push_back(static_cast<int>(v));
            } else {
                if (!std::isfinite(v)) {
                    throw DataError(path.string() + ": line " + std::to_string(lineno) +
                                    ", field " + std::to_string(field) +
                                    ": NaN/Inf not allowed");
                }
                values.push_back(v);
            }
            ++field;
        }
        if (field != d + 1) {
            throw DataError(path.string() + ": line " + std::to_string(lineno) +
                            ": expected " + std::to_string(d + 1) + " fields, got " +
                            std::to_string(field));
        }
    }
    if (labels.empty()) throw DataError(path.string() + ": no rows");

    FeatureStore s;
    const Eigen::Index n = static_cast<Eigen::Index>(labels.size());
    s.features.resize(n, static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d); ++j) {
            s.features(i, j) = values[static_cast<std::size_t>(i) * d +
                                      static_cast<std::size_t>(j)];
        }
    }
    s.labels = std::move(labels);
    s.class_count = remap_labels(s.labels);
    s.meta = "csv:" + path.filename().string();
    validate_store(s, path.string());
    return s;
}

template <typename T>
T read_le(std::istream& in, const std::string& what) {
    unsigned char buf[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) {
        throw DataError("truncated ICIF file while reading " + what +
                        " at offset " + std::to_string(in.tellg()));
    }
    std::uint64_t x = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) x |= std::uint64_t(buf[i]) << (8 * i);
    T out;
    if constexpr (std::is_same_v<T, float>) {
        std::uint32_t u = static_cast<std::uint32_t>(x);
        std::memcpy(&out, &u, sizeof(float));
    } else {
        out = static_cast<T>(x);
    }
    return out;
}

template <typename T>
void write_le(std::ostream& out, T v) {
    std::uint64_t x;
    if constexpr (std::is_same_v<T, float>) {
        std::uint32_t u;
        std::memcpy(&u, &v, sizeof(float));
        x = u;
    } else {
        x = static_cast<std::uint64_t>(v);
    }
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(x >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

FeatureStore load_icif(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());

    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "ICIF", 4) != 0) {
        throw DataError(path.string() + ": bad magic at offset 0");
    }
    const auto version = read_le<std::uint32_t>(in, "version");
    if (version != 1) {
        throw DataError(path.string() + ": unsupported ICIF version " +
                        std::to_string(version));
    }
    const auto n = read_le<std::uint32_t>(in, "n");
    const auto d = read_le<std::uint32_t>(in, "D");
    const auto c = read_le<std::uint32_t>(in, "c");
    if (n == 0) throw DataError(path.string() + ": no rows");
    if (d == 0 || c == 0) throw DataError(path.string() + ": zero D or c");

    FeatureStore s;
    s.class_count = static_cast<int>(c);
    s.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        s.labels[i] = static_cast<int>(read_le<std::uint32_t>(in, "label"));
    }
    s.features.resize(n, d);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t j = 0; j < d; ++j) {
            s.features(i, j) = static_cast<double>(read_le<float>(in, "feature"));
        }
    }
    char extra;
    if (in.read(&extra, 1)) {
        throw DataError(path.string() + ": trailing bytes after payload");
    }
    s.meta = "icif:" + path.filename().string();
    validate_store(s, path.string());
    return s;
}

void save_icif(const FeatureStore& s, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write("ICIF", 4);
    write_le<std::uint32_t>(out, 1);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.dim()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.class_count));
    for (int l : s.labels) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(l));
    for (Eigen::Index i = 0; i < s.features.rows(); ++i) {
        for (Eigen::Index j = 0; j < s.features.cols(); ++j) {
            write_le<float>(out, static_cast<float>(s.features(i, j)));
        }
    }
    if (!out) throw DataError("write failed for " + path.string());
}

void save_csv(const FeatureStore& s, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "label";
    for (Eigen::Index j = 0; j < s.dim(); ++j) out << ",f" << j;
    out << "\n";
    out.precision(17);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        out << s.labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < s.dim(); ++j) out << "," << s.features(i, j);
        out << "\n";
    }
    if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace

std::vector<std::vector<int>> FeatureStore::indices_by_class() const {
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(class_count));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        by_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
    }
    return by_class;
}

FeatureStore load_features(const std::filesystem::path& path, FeatureFormat format) {
    return format == FeatureFormat::csv ? load_csv(path) : load_icif(path);
}

void save_features(const FeatureStore& store, const std::filesystem::path& path,
                   FeatureFormat format) {
    validate_store(store, "save");
    if (format == FeatureFormat::csv) {
        save_csv(store, path);
    } else {
        save_icif(store, path);
    }
}

Episode sample_episode(const FeatureStore& store, const EpisodeSpec& spec,
                       std::uint64_t seed) {
    if (spec.ways < 2) throw ConfigError("episode needs ways >= 2");
    if (spec.shots < 1) throw ConfigError("episode needs shots >= 1");
    if (spec.queries < 0 || spec.unlabeled < 0) {
        throw ConfigError("negative queries/unlabeled");
    }
    if (spec.ways > store.class_count) {
        throw DataError("store has " + std::to_string(store.class_count) +
                        " classes, episode wants " + std::to_string(spec.ways));
    }

    const bool semi = spec.mode == EpisodeMode::semi_supervised;
    const int per_class_need = spec.shots + spec.queries + (semi ? spec.unlabeled : 0);

    Rng rng(seed);
    std::vector<int> class_pool(static_cast<std::size_t>(store.class_count));
    for (std::size_t i = 0; i < class_pool.size(); ++i) class_pool[i] = static_cast<int>(i);
    rng.shuffle(class_pool);
    class_pool.resize(static_cast<std::size_t>(spec.ways));

    const auto by_class = store.indices_by_class();
    for (int cls : class_pool) {
        if (static_cast<int>(by_class[static_cast<std::size_t>(cls)].size()) < per_class_need) {
            throw DataError("class " + std::to_string(cls) + " has " +
                            std::to_string(by_class[static_cast<std::size_t>(cls)].size()) +
                            " instances, episode needs " + std::to_string(per_class_need));
        }
    }

    Episode ep;
    ep.seed = seed;
    ep.ways = spec.ways;
    IntVector unl_truth;
    for (int local = 0; local < spec.ways; ++local) {
        auto pool = by_class[static_cast<std::size_t>(class_pool[static_cast<std::size_t>(local)])];
        rng.shuffle(pool);
        int at = 0;
        for (int k = 0; k < spec.shots; ++k) {
            ep.support_rows.push_back(pool[static_cast<std::size_t>(at++)]);
            ep.support_y.push_back(local);
        }
        for (int k = 0; k < spec.queries; ++k) {
            ep.query_rows.push_back(pool[static_cast<std::size_t>(at++)]);
            ep.query_y.push_back(local);
        }
        if (semi) {
            for (int k = 0; k < spec.unlabeled; ++k) {
                ep.unlabeled_rows.push_back(pool[static_cast<std::size_t>(at++)]);
                unl_truth.push_back(local);
            }
        }
    }
    if (!semi) {
        ep.unlabeled_rows = ep.query_rows;
        unl_truth = ep.query_y;
    }

    auto gather = [&](const IntVector& rows) {
        Matrix m(static_cast<Eigen::Index>(rows.size()), store.dim());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            m.row(static_cast<Eigen::Index>(i)) = store.features.row(rows[i]);
        }
        return m;
    };
    ep.support_x = gather(ep.support_rows);
    ep.query_x = gather(ep.query_rows);
    ep.unlabeled_x = gather(ep.unlabeled_rows);
    ep.set_hidden_truth(std::move(unl_truth));
    return ep;
}

FeatureStore synth_gaussian(int c, int per_class, int D, double separation,
                            double noise_sigma, std::uint64_t seed) {
    if (c < 2) throw ConfigError("synth needs c >= 2");
    if (per_class < 1) throw ConfigError("synth needs per_class >= 1");
    if (D < 1) throw ConfigError("synth needs D >= 1");
    if (separation < 0 || noise_sigma < 0) {
        throw ConfigError("synth needs separation >= 0 and noise_sigma >= 0");
    }

    Rng rng(seed);
    Matrix means(c, D);
    const int max_attempts = 1000 * c;
    int placed = 0;
    for (int attempt = 0; attempt < max_attempts && placed < c; ++attempt) {
        Vector v(D);
        for (int j = 0; j < D; ++j) v(j) = rng.normal();
        const double norm = v.norm();
        if (norm == 0.0) continue;
        v *= separation / (norm == 0.0 ? 1.0 : norm);
        bool ok = true;
        for (int k = 0; k < placed; ++k) {
            if ((means.row(k).transpose() - v).norm() < separation) {
                ok = false;
                break;
            }
        }
        if (ok) means.row(placed++) = v.transpose();
    }
    if (placed < c) {
        throw DataError("could not place " + std::to_string(c) +
                        " class means at separation " + std::to_string(separation) +
                        " in " + std::to_string(max_attempts) + " attempts");
    }

    FeatureStore s;
    s.class_count = c;
    s.features.resize(static_cast<Eigen::Index>(c) * per_class, D);
    s.labels.resize(static_cast<std::size_t>(c) * static_cast<std::size_t>(per_class));
    Eigen::Index row = 0;
    for (int cls = 0; cls < c; ++cls) {
        for (int k = 0; k < per_class; ++k, ++row) {
            for (int j = 0; j < D; ++j) {
                const double x = means(cls, j) + noise_sigma * rng.normal();
                // f32 quantization keeps ICIF round-trips bit-exact.
                s.features(row, j) = static_cast<double>(static_cast<float>(x));
            }
            s.labels[static_cast<std::size_t>(row)] = cls;
        }
    }
    s.meta = "synthetic spherical-gaussian c=" + std::to_string(c) +
             " per_class=" + std::to_string(per_class) + " D=" + std::to_string(D) +
             " sep=" + std::to_string(separation) + " sigma=" + std::to_string(noise_sigma) +
             " seed=" + std::to_string(seed);
    return s;
}

Matrix one_hot(const IntVector& labels, int c) {
    if (c < 1) throw ConfigError("one_hot needs c >= 1");
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), c);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= c) {
            throw ConfigError("label id " + std::to_string(labels[i]) +
                              " out of range for c=" + std::to_string(c));
        }
        y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    }
    return y;
}

Matrix l2_normalize(const Matrix& X) {
    Matrix out = X;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double norm = out.row(i).norm();
        if (norm > 0.0) out.row(i) /= norm;
    }
    return out;
}

}  // namespace ici::data
