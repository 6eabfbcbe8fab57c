// Dataset manifest: CSV index of samples with subset/class/split/fold tags,
// and the stratified K-fold assignment.
#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace swinlet {

inline const std::array<std::string, 7>& class_names() {
    static const std::array<std::string, 7> names = {"unfertilized", "_PKCa", "N_KCa", "NP_Ca",
                                                     "NPK_",        "NPKCa", "NPKCa+m+s"};
    return names;
}

constexpr int kNumClasses = 7;

struct ManifestRow {
    std::string sample_id;
    std::string relpath;
    char subset = 'A';  // 'A' or 'B'
    int class_id = 0;
    std::string split;  // "train" or "test"
    int fold = -1;
};

struct Manifest {
    std::vector<ManifestRow> rows;
    std::filesystem::path base_dir;  // relpaths resolve against this

    std::filesystem::path resolve(const ManifestRow& row) const { return base_dir / row.relpath; }

    std::vector<const ManifestRow*> select(char subset, const std::string& split, int exclude_fold = -2,
                                           int only_fold = -2) const {
        std::vector<const ManifestRow*> out;
        for (const auto& r : rows) {
            if (subset != '*' && r.subset != subset) continue;
            if (!split.empty() && r.split != split) continue;
            if (exclude_fold >= -1 && r.fold == exclude_fold) continue;
            if (only_fold >= -1 && r.fold != only_fold) continue;
            out.push_back(&r);
        }
        return out;
    }
};

constexpr const char* kManifestHeader = "sample_id,relpath,subset,class_id,split,fold";

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}
}  // namespace detail

inline Manifest load_manifest(const std::filesystem::path& path, bool check_files = true) {
    std::ifstream f(path);
    check(bool(f), "load_manifest: cannot open " + path.string());
    Manifest m;
    m.base_dir = path.parent_path();
    std::string line;
    check(bool(std::getline(f, line)), "load_manifest: empty file " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    check(line == kManifestHeader,
          "load_manifest: bad header, expected '" + std::string(kManifestHeader) + "', got '" + line + "'");
    std::set<std::string> seen;
    while (std::getline(f, line)) {
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_csv_line(line);
        check(fields.size() == 6, "load_manifest: expected 6 fields, got " + std::to_string(fields.size()));
        ManifestRow r;
        r.sample_id = fields[0];
        r.relpath = fields[1];
        check(fields[2] == "A" || fields[2] == "B", "load_manifest: subset must be A or B, got '" + fields[2] + "'");
        r.subset = fields[2][0];
        try {
            r.class_id = std::stoi(fields[3]);
        } catch (...) {
            fail("load_manifest: bad class_id '" + fields[3] + "'");
        }
        check(r.class_id >= 0 && r.class_id < kNumClasses,
              "load_manifest: class_id out of range: " + fields[3] + " for sample " + r.sample_id);
        check(fields[4] == "train" || fields[4] == "test",
              "load_manifest: split must be train or test, got '" + fields[4] + "'");
        r.split = fields[4];
        try {
            r.fold = std::stoi(fields[5]);
        } catch (...) {
            fail("load_manifest: bad fold '" + fields[5] + "'");
        }
        check(r.fold >= -1, "load_manifest: fold must be >= -1");
        check(seen.insert(r.sample_id).second, "load_manifest: duplicate sample_id '" + r.sample_id + "'");
        if (check_files)
            check(std::filesystem::exists(m.resolve(r)),
                  "load_manifest: missing file " + m.resolve(r).string() + " for sample " + r.sample_id);
        m.rows.push_back(std::move(r));
    }
    return m;
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);  // LF line endings everywhere
    check(bool(f), "save_manifest: cannot open " + path.string());
    f << kManifestHeader << "\n";
    for (const auto& r : m.rows)
        f << r.sample_id << ',' << r.relpath << ',' << r.subset << ',' << r.class_id << ',' << r.split << ','
          << r.fold << "\n";
    check(bool(f), "save_manifest: short write");
}

struct FoldSplit {
    int k = 5;
    std::map<std::string, int> assignment;  // sample_id -> fold, train split only
};

// Stratified by (subset, class) over the train split; deterministic for a
// fixed seed regardless of row order.
inline FoldSplit kfold_split(const Manifest& m, int k, u64 seed) {
    check(k >= 2, "kfold_split: k must be >= 2");
    FoldSplit out;
    out.k = k;
    std::map<std::pair<char, int>, std::vector<std::string>> cells;
    for (const auto& r : m.rows)
        if (r.split == "train") cells[{r.subset, r.class_id}].push_back(r.sample_id);
    for (auto& [key, ids] : cells) {
        check(i64(ids.size()) >= k, "kfold_split: cell (" + std::string(1, key.first) + ", class " +
                                        std::to_string(key.second) + ") has " + std::to_string(ids.size()) +
                                        " samples, fewer than k=" + std::to_string(k));
        std::sort(ids.begin(), ids.end());
        Rng rng = StreamKey(seed).with("kfold").with(u64(key.first)).with(key.second).rng();
        for (size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[size_t(rng.below(i))]);
        const int offset = ((key.first == 'B' ? kNumClasses : 0) + key.second) % k;
        for (size_t i = 0; i < ids.size(); ++i) out.assignment[ids[i]] = int((i + size_t(offset)) % size_t(k));
    }
    return out;
}

inline Manifest with_folds(const Manifest& m, const FoldSplit& split) {
    Manifest out = m;
    for (auto& r : out.rows) {
        if (r.split != "train") {
            r.fold = -1;
            continue;
        }
        auto it = split.assignment.find(r.sample_id);
        check(it != split.assignment.end(), "with_folds: sample '" + r.sample_id + "' missing from fold assignment");
        r.fold = it->second;
    }
    return out;
}

}  // namespace swinlet
