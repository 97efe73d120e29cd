#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qnet/errors.hpp"
#include "qnet/linalg.hpp"

namespace qnet {

// A batch of (approximately) stationary draws plus everything needed to
// reproduce or audit it: sampling schedule, replication layout, master seed,
// and a digest of the model that produced it.
struct StationarySampleSet {
    Mat samples;                  // rows = draws, cols = components
    std::string kind;             // "queue-length" or "sojourn"
    double warmup = 0.0;
    double spacing = 0.0;
    int replications = 1;
    std::vector<int> rep_of_row;  // which replication produced each row
    std::uint64_t seed = 0;
    std::uint64_t model_digest = 0;

    int rows() const { return static_cast<int>(samples.rows()); }
    int cols() const { return static_cast<int>(samples.cols()); }

    std::vector<double> column(int j) const {
        std::vector<double> out(static_cast<std::size_t>(samples.rows()));
        for (Eigen::Index i = 0; i < samples.rows(); ++i) out[i] = samples(i, j);
        return out;
    }

    std::vector<double> column_of_rep(int j, int rep) const {
        std::vector<double> out;
        for (Eigen::Index i = 0; i < samples.rows(); ++i)
            if (rep_of_row[static_cast<std::size_t>(i)] == rep) out.push_back(samples(i, j));
        return out;
    }
};

inline void export_samples(std::ostream& os, const StationarySampleSet& s) {
    os << "# samples kind=" << s.kind << " rows=" << s.rows() << " cols=" << s.cols()
       << " warmup=" << s.warmup << " spacing=" << s.spacing
       << " replications=" << s.replications << " seed=" << s.seed
       << " digest=" << s.model_digest << "\n";
    os.precision(17);
    for (int i = 0; i < s.rows(); ++i) {
        os << s.rep_of_row[static_cast<std::size_t>(i)];
        for (int j = 0; j < s.cols(); ++j) os << '\t' << s.samples(i, j);
        os << '\n';
    }
}

inline StationarySampleSet import_samples(std::istream& is) {
    std::string header;
    std::getline(is, header);
    StationarySampleSet s;
    int rows = -1, cols = -1;
    std::istringstream hs(header);
    std::string tok;
    while (hs >> tok) {
        auto p = tok.find('=');
        if (p == std::string::npos) continue;
        std::string k = tok.substr(0, p), v = tok.substr(p + 1);
        if (k == "kind") s.kind = v;
        else if (k == "rows") rows = std::stoi(v);
        else if (k == "cols") cols = std::stoi(v);
        else if (k == "warmup") s.warmup = std::stod(v);
        else if (k == "spacing") s.spacing = std::stod(v);
        else if (k == "replications") s.replications = std::stoi(v);
        else if (k == "seed") s.seed = std::stoull(v);
        else if (k == "digest") s.model_digest = std::stoull(v);
    }
    if (rows < 0 || cols < 1) throw Error("invalid-argument", "malformed sample header");
    s.samples.resize(rows, cols);
    s.rep_of_row.resize(static_cast<std::size_t>(rows));
    for (int i = 0; i < rows; ++i) {
        is >> s.rep_of_row[static_cast<std::size_t>(i)];
        for (int j = 0; j < cols; ++j) is >> s.samples(i, j);
    }
    if (!is) throw Error("invalid-argument", "truncated sample data");
    return s;
}

}  // namespace qnet
