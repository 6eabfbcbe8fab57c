// In-memory image cache keyed by manifest row.
#pragma once

#include <map>
#include <string>

#include "image.hpp"
#include "manifest.hpp"

namespace swinlet {

// Decode-once cache. Preload everything you need up front when sharing
// across threads; lookups after preload are read-only.
class ImageStore {
public:
    explicit ImageStore(const Manifest& manifest) : manifest_(&manifest) {}

    void preload() {
        for (const auto& r : manifest_->rows) get(r);
    }

    const Image& get(const ManifestRow& row) {
        auto it = cache_.find(row.sample_id);
        if (it == cache_.end()) it = cache_.emplace(row.sample_id, read_ppm(manifest_->resolve(row))).first;
        return it->second;
    }

private:
    const Manifest* manifest_;
    std::map<std::string, Image> cache_;
};

}  // namespace swinlet
