// SPDX-License-Identifier: Apache-2.0
//
// Post-download curation: record filters, pluggable image descriptors with a
// binary cache, duplicate clustering, eval-set leak detection, and benchmark
// term exclusion.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kgharvest/concurrency.hpp"
#include "kgharvest/errors.hpp"
#include "kgharvest/harvester.hpp"
#include "kgharvest/image_io.hpp"
#include "kgharvest/jsonl.hpp"
#include "kgharvest/query_build.hpp"
#include "kgharvest/strings.hpp"

namespace kgharvest {

struct FilterDecision {
    bool keep = true;
    std::string rule;  // empty when kept
    json values;       // inputs the rule saw, for the report
};

inline size_t utf8_length(const std::string& s) {
    size_t n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

constexpr size_t kMaxAltTextChars = 500;
constexpr int kMaxAspectRatio = 4;
constexpr uint64_t kMinImageArea = 4096;

// Drops only on strictly-greater length or a whole-string JSON object/array.
inline FilterDecision filter_text(const std::string& alt_text) {
    size_t len = utf8_length(alt_text);
    if (len > kMaxAltTextChars)
        return {false, "too_long", json{{"length", len}, {"max", kMaxAltTextChars}}};
    json parsed = json::parse(alt_text, nullptr, false);
    if (!parsed.is_discarded() && (parsed.is_object() || parsed.is_array()))
        return {false, "json", json{{"length", len}}};
    return {};
}

// Aspect uses integer math: drop iff max > 4*min. Equality keeps on both rules.
inline FilterDecision filter_image(uint32_t width, uint32_t height) {
    uint64_t lo = std::min(width, height), hi = std::max(width, height);
    if (hi > uint64_t(kMaxAspectRatio) * lo)
        return {false, "aspect", json{{"width", width}, {"height", height}}};
    uint64_t area = uint64_t(width) * height;
    if (area < kMinImageArea)
        return {false, "area",
                json{{"width", width}, {"height", height}, {"area", area}}};
    return {};
}

struct FilterReport {
    uint64_t images_dropped = 0;
    uint64_t texts_dropped = 0;
    std::vector<json> rows;  // {id, kind, rule, values}
};

// Image drop removes the record; text drop removes just the alt text.
inline std::vector<ImageRecord> apply_filters(const std::vector<ImageRecord>& records,
                                              FilterReport* report = nullptr) {
    std::vector<ImageRecord> kept;
    kept.reserve(records.size());
    for (const auto& rec : records) {
        FilterDecision img = filter_image(rec.width, rec.height);
        if (!img.keep) {
            if (report) {
                ++report->images_dropped;
                report->rows.push_back({{"id", rec.id},
                                        {"kind", "image"},
                                        {"rule", img.rule},
                                        {"values", img.values}});
            }
            continue;
        }
        ImageRecord out = rec;
        out.alt_texts.clear();
        for (const auto& alt : rec.alt_texts) {
            FilterDecision txt = filter_text(alt);
            if (txt.keep) {
                out.alt_texts.push_back(alt);
            } else if (report) {
                ++report->texts_dropped;
                report->rows.push_back({{"id", rec.id},
                                        {"kind", "text"},
                                        {"rule", txt.rule},
                                        {"values", txt.values},
                                        {"text", alt.substr(0, 80)}});
            }
        }
        kept.push_back(std::move(out));
    }
    return kept;
}

// ---------------------------------------------------------------------------
// Descriptors

class DescriptorBackend {
public:
    virtual ~DescriptorBackend() = default;
    virtual std::string id() const = 0;
    virtual size_t dim() const = 0;
    virtual std::vector<float> compute(const GrayImage& image) const = 0;
};

// Box-averaged 16x16 grayscale, mean-centered then L2-normalized. Centering
// removes the DC brightness component: without it every pair of ordinary
// photos scores cosine ~0.9 and thresholds stop meaning anything. Dull but
// deterministic; production swaps in a learned backend.
class GrayscaleDescriptor : public DescriptorBackend {
public:
    static constexpr uint32_t kSide = 16;

    std::string id() const override { return "gray16"; }
    size_t dim() const override { return kSide * kSide; }

    std::vector<float> compute(const GrayImage& image) const override {
        std::vector<float> v(dim(), 0.0f);
        if (image.width == 0 || image.height == 0) return fallback();
        for (uint32_t oy = 0; oy < kSide; ++oy) {
            uint32_t y0 = uint32_t(uint64_t(oy) * image.height / kSide);
            uint32_t y1 = uint32_t(uint64_t(oy + 1) * image.height / kSide);
            if (y1 <= y0) y1 = y0 + 1;
            for (uint32_t ox = 0; ox < kSide; ++ox) {
                uint32_t x0 = uint32_t(uint64_t(ox) * image.width / kSide);
                uint32_t x1 = uint32_t(uint64_t(ox + 1) * image.width / kSide);
                if (x1 <= x0) x1 = x0 + 1;
                double sum = 0.0;
                for (uint32_t y = y0; y < y1 && y < image.height; ++y)
                    for (uint32_t x = x0; x < x1 && x < image.width; ++x)
                        sum += image.pixels[size_t(y) * image.width + x];
                v[oy * kSide + ox] =
                    float(sum / (double(y1 - y0) * double(x1 - x0)));
            }
        }
        double mean = 0.0;
        for (float f : v) mean += f;
        mean /= v.size();
        double norm = 0.0;
        for (float& f : v) {
            f = float(f - mean);
            norm += double(f) * f;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12) return fallback();  // flat image: no structure left
        for (float& f : v) f = float(f / norm);
        return v;
    }

private:
    // Flat images still need a direction for cosine comparisons.
    std::vector<float> fallback() const {
        return std::vector<float>(dim(), 1.0f / kSide);
    }
};

struct DescriptorSet {
    std::string backend_id;
    size_t dim = 0;
    std::map<std::string, std::vector<float>> vectors;
};

// Both inputs assumed unit-normalized, so cosine is just the dot product.
inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size())
        throw ContractError("cosine: dimension mismatch " + std::to_string(a.size()) +
                            " vs " + std::to_string(b.size()));
    double dot = 0.0;
    for (size_t i = 0; i < a.size(); ++i) dot += double(a[i]) * b[i];
    return dot;
}

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}
inline bool get_u32(const std::string& s, size_t& pos, uint32_t& v) {
    if (pos + 4 > s.size()) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(s[pos + i])) << (8 * i);
    pos += 4;
    return true;
}
inline bool get_u64(const std::string& s, size_t& pos, uint64_t& v) {
    if (pos + 8 > s.size()) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(s[pos + i])) << (8 * i);
    pos += 8;
    return true;
}

}  // namespace detail

constexpr char kDescriptorCacheMagic[4] = {'K', 'G', 'H', 'D'};
constexpr uint32_t kDescriptorCacheVersion = 1;

inline void save_descriptor_cache(const DescriptorSet& set,
                                  const std::filesystem::path& path) {
    std::string out;
    out.append(kDescriptorCacheMagic, 4);
    detail::put_u32(out, kDescriptorCacheVersion);
    detail::put_u32(out, uint32_t(set.backend_id.size()));
    out += set.backend_id;
    detail::put_u32(out, uint32_t(set.dim));
    detail::put_u64(out, set.vectors.size());
    for (const auto& [id, vec] : set.vectors) {
        detail::put_u32(out, uint32_t(id.size()));
        out += id;
        for (float f : vec) {
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            detail::put_u32(out, bits);
        }
    }
    detail::write_file_atomic(path, out);
}

// Returns nullopt on any structural problem or a backend/dim mismatch;
// callers treat that as a cold cache.
inline std::optional<DescriptorSet> load_descriptor_cache(
    const std::filesystem::path& path, const std::string& backend_id, size_t dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::string data((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    size_t pos = 0;
    if (data.size() < 4 || std::memcmp(data.data(), kDescriptorCacheMagic, 4) != 0)
        return std::nullopt;
    pos = 4;
    uint32_t version = 0, id_len = 0, file_dim = 0;
    if (!detail::get_u32(data, pos, version) || version != kDescriptorCacheVersion)
        return std::nullopt;
    if (!detail::get_u32(data, pos, id_len) || pos + id_len > data.size())
        return std::nullopt;
    std::string file_backend = data.substr(pos, id_len);
    pos += id_len;
    if (!detail::get_u32(data, pos, file_dim)) return std::nullopt;
    if (file_backend != backend_id || file_dim != dim) return std::nullopt;
    uint64_t count = 0;
    if (!detail::get_u64(data, pos, count)) return std::nullopt;
    DescriptorSet set;
    set.backend_id = backend_id;
    set.dim = dim;
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t rid_len = 0;
        if (!detail::get_u32(data, pos, rid_len) || pos + rid_len > data.size())
            return std::nullopt;
        std::string rid = data.substr(pos, rid_len);
        pos += rid_len;
        std::vector<float> vec(dim);
        for (size_t d = 0; d < dim; ++d) {
            uint32_t bits = 0;
            if (!detail::get_u32(data, pos, bits)) return std::nullopt;
            std::memcpy(&vec[d], &bits, 4);
        }
        set.vectors[rid] = std::move(vec);
    }
    return set;
}

struct DescriptorFailures {
    std::vector<json> rows;  // {id, reason}; records stay in the manifest
};

// Per-image work parallelizes; cache hits skip decode entirely. Failed
// records are flagged and simply absent from the returned set.
inline DescriptorSet compute_descriptors(const std::vector<ImageRecord>& records,
                                         const std::filesystem::path& store_root,
                                         const DescriptorBackend& backend,
                                         size_t workers = 8,
                                         const std::filesystem::path& cache_path = {},
                                         DescriptorFailures* failures = nullptr) {
    DescriptorSet set;
    set.backend_id = backend.id();
    set.dim = backend.dim();
    if (!cache_path.empty()) {
        if (auto cached = load_descriptor_cache(cache_path, set.backend_id, set.dim))
            set.vectors = std::move(cached->vectors);
    }
    std::vector<const ImageRecord*> todo;
    for (const auto& rec : records)
        if (!set.vectors.count(rec.id)) todo.push_back(&rec);

    std::mutex mu;
    std::map<std::string, std::vector<float>> fresh;
    parallel_for(todo.size(), workers, [&](size_t i) {
        const ImageRecord& rec = *todo[i];
        std::string reason;
        std::optional<std::vector<float>> vec;
        std::ifstream in(store_root / rec.path, std::ios::binary);
        if (!in) {
            reason = "missing_file";
        } else {
            std::string bytes((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
            auto gray = decode_gray(bytes);
            if (!gray) reason = "decode_failed";
            else vec = backend.compute(*gray);
        }
        std::lock_guard<std::mutex> lock(mu);
        if (vec) fresh[rec.id] = std::move(*vec);
        else if (failures)
            failures->rows.push_back({{"id", rec.id}, {"reason", reason}});
    });
    for (auto& [id, vec] : fresh) set.vectors[id] = std::move(vec);
    if (!cache_path.empty() && !fresh.empty()) save_descriptor_cache(set, cache_path);

    // Trim cache-loaded entries that no longer correspond to manifest rows.
    std::set<std::string> wanted;
    for (const auto& rec : records) wanted.insert(rec.id);
    for (auto it = set.vectors.begin(); it != set.vectors.end();)
        it = wanted.count(it->first) ? std::next(it) : set.vectors.erase(it);
    return set;
}

// ---------------------------------------------------------------------------
// Duplicate clustering

struct DuplicateCluster {
    std::vector<std::string> member_ids;  // sorted ascending
    std::string retained_id;
    std::vector<std::string> merged_alt_texts;
};

namespace detail {

class UnionFind {
public:
    explicit UnionFind(size_t n) : parent_(n) {
        std::iota(parent_.begin(), parent_.end(), size_t{0});
    }
    size_t find(size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    void unite(size_t a, size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<size_t> parent_;
};

}  // namespace detail

// Connected components over the cosine >= threshold graph, singletons
// included. Retained member: max area, then larger byte size, then smallest
// id. Records missing a descriptor do not participate.
inline std::vector<DuplicateCluster> cluster_duplicates(
    const DescriptorSet& descriptors, const std::vector<ImageRecord>& records,
    double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ConfigError("dedup threshold must be in (0, 1], got " +
                          std::to_string(threshold));
    std::map<std::string, const ImageRecord*> by_id;
    for (const auto& rec : records) by_id[rec.id] = &rec;

    std::vector<std::string> ids;
    ids.reserve(descriptors.vectors.size());
    for (const auto& [id, vec] : descriptors.vectors)
        if (by_id.count(id)) ids.push_back(id);  // already sorted: map order

    detail::UnionFind uf(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        const auto& vi = descriptors.vectors.at(ids[i]);
        for (size_t j = i + 1; j < ids.size(); ++j)
            if (cosine(vi, descriptors.vectors.at(ids[j])) >= threshold)
                uf.unite(i, j);
    }

    std::map<size_t, std::vector<size_t>> groups;
    for (size_t i = 0; i < ids.size(); ++i) groups[uf.find(i)].push_back(i);

    std::vector<DuplicateCluster> clusters;
    clusters.reserve(groups.size());
    for (auto& [root, members] : groups) {
        DuplicateCluster c;
        for (size_t m : members) c.member_ids.push_back(ids[m]);
        std::sort(c.member_ids.begin(), c.member_ids.end());
        c.retained_id = c.member_ids.front();
        for (const auto& id : c.member_ids) {
            const ImageRecord& cand = *by_id.at(id);
            const ImageRecord& best = *by_id.at(c.retained_id);
            uint64_t ca = uint64_t(cand.width) * cand.height;
            uint64_t ba = uint64_t(best.width) * best.height;
            if (ca > ba || (ca == ba && cand.byte_size > best.byte_size))
                c.retained_id = id;
        }
        c.merged_alt_texts = by_id.at(c.retained_id)->alt_texts;
        for (const auto& id : c.member_ids) {
            if (id == c.retained_id) continue;
            for (const auto& alt : by_id.at(id)->alt_texts)
                if (std::find(c.merged_alt_texts.begin(), c.merged_alt_texts.end(),
                              alt) == c.merged_alt_texts.end())
                    c.merged_alt_texts.push_back(alt);
        }
        // Exact dedup of the retained record's own list too.
        std::vector<std::string> unique;
        for (const auto& alt : c.merged_alt_texts)
            if (std::find(unique.begin(), unique.end(), alt) == unique.end())
                unique.push_back(alt);
        c.merged_alt_texts = std::move(unique);
        clusters.push_back(std::move(c));
    }
    std::sort(clusters.begin(), clusters.end(),
              [](const DuplicateCluster& a, const DuplicateCluster& b) {
                  return a.member_ids.front() < b.member_ids.front();
              });
    return clusters;
}

// Survivors keep manifest order; each absorbs its cluster's alt texts and
// provenance. Records without descriptors pass through untouched.
inline std::vector<ImageRecord> apply_dedup(const std::vector<ImageRecord>& records,
                                            const std::vector<DuplicateCluster>& clusters,
                                            std::vector<json>* removed = nullptr) {
    std::map<std::string, const DuplicateCluster*> retained_of;
    std::set<std::string> dropped;
    for (const auto& c : clusters) {
        retained_of[c.retained_id] = &c;
        for (const auto& id : c.member_ids)
            if (id != c.retained_id) dropped.insert(id);
    }
    std::map<std::string, const ImageRecord*> by_id;
    for (const auto& rec : records) by_id[rec.id] = &rec;

    std::vector<ImageRecord> out;
    out.reserve(records.size());
    for (const auto& rec : records) {
        if (dropped.count(rec.id)) {
            if (removed)
                removed->push_back({{"id", rec.id},
                                    {"rule", "duplicate"},
                                    {"retained", [&] {
                                         for (const auto& c : clusters)
                                             for (const auto& id : c.member_ids)
                                                 if (id == rec.id) return c.retained_id;
                                         return std::string();
                                     }()}});
            continue;
        }
        auto it = retained_of.find(rec.id);
        if (it == retained_of.end() || it->second->member_ids.size() == 1) {
            out.push_back(rec);
            continue;
        }
        ImageRecord merged = rec;
        merged.alt_texts = it->second->merged_alt_texts;
        for (const auto& id : it->second->member_ids) {
            if (id == rec.id) continue;
            const ImageRecord& other = *by_id.at(id);
            for (const auto& q : other.query_refs)
                if (std::find(merged.query_refs.begin(), merged.query_refs.end(), q) ==
                    merged.query_refs.end())
                    merged.query_refs.push_back(q);
            for (const auto& r : other.result_ids)
                if (std::find(merged.result_ids.begin(), merged.result_ids.end(), r) ==
                    merged.result_ids.end())
                    merged.result_ids.push_back(r);
        }
        out.push_back(std::move(merged));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Eval-set leaks and benchmark terms

struct LeakHit {
    std::string dataset_id;
    std::string eval_id;
    double similarity = 0.0;
};

inline std::vector<LeakHit> detect_eval_leaks(const DescriptorSet& dataset,
                                              const DescriptorSet& eval,
                                              double threshold) {
    if (dataset.backend_id != eval.backend_id)
        throw ConfigError("leak scan needs one descriptor backend, got '" +
                          dataset.backend_id + "' vs '" + eval.backend_id + "'");
    if (dataset.dim != eval.dim)
        throw ConfigError("leak scan dimension mismatch: " +
                          std::to_string(dataset.dim) + " vs " +
                          std::to_string(eval.dim));
    std::vector<LeakHit> hits;
    for (const auto& [did, dvec] : dataset.vectors)
        for (const auto& [eid, evec] : eval.vectors) {
            double sim = cosine(dvec, evec);
            if (sim >= threshold) hits.push_back({did, eid, sim});
        }
    return hits;  // map iteration keeps (dataset_id, eval_id) order
}

// Leaked images are marked excluded, never deleted. An earlier exclusion
// reason wins.
inline void mark_eval_leaks(std::vector<ImageRecord>& records,
                            const std::vector<LeakHit>& hits) {
    std::map<std::string, const LeakHit*> first_hit;
    for (const auto& h : hits) first_hit.emplace(h.dataset_id, &h);
    for (auto& rec : records) {
        auto it = first_hit.find(rec.id);
        if (it == first_hit.end() || rec.excluded) continue;
        rec.excluded = true;
        rec.excluded_reason = "eval_leak:" + it->second->eval_id;
    }
}

// Case-insensitive substring match; removals logged with the first matching
// term in input order.
inline std::vector<SearchQuery> exclude_benchmark_terms(
    const std::vector<SearchQuery>& queries, const std::vector<std::string>& terms,
    std::vector<json>* removals = nullptr) {
    std::vector<std::string> folded;
    folded.reserve(terms.size());
    for (const auto& t : terms) folded.push_back(fold_key(t));
    std::vector<SearchQuery> kept;
    kept.reserve(queries.size());
    for (const auto& q : queries) {
        std::string hay = fold_key(q.text);
        const std::string* hit = nullptr;
        for (size_t i = 0; i < folded.size(); ++i)
            if (!folded[i].empty() && hay.find(folded[i]) != std::string::npos) {
                hit = &terms[i];
                break;
            }
        if (!hit) {
            kept.push_back(q);
        } else if (removals) {
            removals->push_back({{"query_id", q.id}, {"text", q.text}, {"term", *hit}});
        }
    }
    return kept;
}

// Entities whose surface forms collide with a benchmark term, for marking.
inline std::vector<json> benchmark_entity_matches(const std::vector<Entity>& entities,
                                                  const std::vector<std::string>& terms) {
    std::vector<json> matches;
    for (const auto& e : entities) {
        bool matched = false;
        for (const auto& form : e.surface_forms()) {
            std::string hay = fold_key(form);
            for (const auto& t : terms) {
                std::string needle = fold_key(t);
                if (!needle.empty() && hay.find(needle) != std::string::npos) {
                    matches.push_back(
                        {{"entity_id", e.id}, {"form", form}, {"term", t}});
                    matched = true;
                    break;
                }
            }
            if (matched) break;
        }
    }
    return matches;
}

}  // namespace kgharvest
