// SPDX-License-Identifier: Apache-2.0
//
// Zero-shot classification and retrieval metrics over an abstract encoder
// pair. Class vectors may ensemble over prompt templates; argmax ties always
// resolve to the lowest index so results are deterministic.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "kgharvest/curate.hpp"
#include "kgharvest/errors.hpp"
#include "kgharvest/hash.hpp"
#include "kgharvest/image_io.hpp"
#include "kgharvest/jsonl.hpp"
#include "kgharvest/strings.hpp"

namespace kgharvest {

class Encoder {
public:
    virtual ~Encoder() = default;
    virtual size_t dim() const = 0;
    // image_ref is opaque to the harness; file-backed encoders treat it as a path.
    virtual std::vector<float> embed_image(const std::string& image_ref) const = 0;
    virtual std::vector<float> embed_text(const std::string& text) const = 0;
};

struct EvalItem {
    std::string image_ref;
    size_t gold = 0;

    bool operator==(const EvalItem& o) const {
        return image_ref == o.image_ref && gold == o.gold;
    }
};

struct EvalSpec {
    std::vector<std::string> class_names;
    std::vector<std::string> prompt_templates;
    std::vector<EvalItem> items;

    void validate() const {
        if (class_names.empty()) throw ConfigError("eval spec has no class names");
        for (const auto& item : items)
            if (item.gold >= class_names.size())
                throw ConfigError("gold index " + std::to_string(item.gold) +
                                  " out of range for " +
                                  std::to_string(class_names.size()) + " classes");
    }

    static EvalSpec from_json(const json& j) {
        EvalSpec spec;
        spec.class_names = j.at("class_names").get<std::vector<std::string>>();
        spec.prompt_templates =
            j.value("prompt_templates", std::vector<std::string>{});
        for (const auto& item : j.value("items", json::array()))
            spec.items.push_back(
                {item.at("image").get<std::string>(), item.at("gold").get<size_t>()});
        spec.validate();
        return spec;
    }
};

struct RetrievalPair {
    std::string image_ref;
    std::vector<std::string> texts;
};

struct RetrievalSpec {
    std::vector<RetrievalPair> pairs;

    void validate() const {
        for (const auto& p : pairs)
            if (p.texts.empty())
                throw ConfigError("retrieval pair " + p.image_ref + " has no texts");
    }
};

// One template per line; blank lines and # comments skipped.
inline std::vector<std::string> load_templates(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open template file " + path.string());
    std::vector<std::string> templates;
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        templates.push_back(t);
    }
    return templates;
}

inline std::string instantiate_template(const std::string& tmpl,
                                        const std::string& class_name) {
    size_t pos = tmpl.find("{}");
    if (pos == std::string::npos)
        throw ConfigError("prompt template missing {} placeholder: " + tmpl);
    std::string out = tmpl;
    while ((pos = out.find("{}")) != std::string::npos)
        out.replace(pos, 2, class_name);
    return out;
}

namespace detail {

inline double l2_norm(const std::vector<float>& v) {
    double s = 0.0;
    for (float f : v) s += double(f) * f;
    return std::sqrt(s);
}

inline bool normalize_in_place(std::vector<float>& v) {
    double n = l2_norm(v);
    if (n < 1e-12) return false;
    for (float& f : v) f = float(f / n);
    return true;
}

inline double dot(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size())
        throw ContractError("embedding dimension mismatch: " +
                            std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += double(a[i]) * b[i];
    return s;
}

// Strictly-greater comparison keeps the lowest index on ties.
inline size_t argmax(const std::vector<double>& scores) {
    size_t best = 0;
    for (size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

}  // namespace detail

// Class vector per class name. With prompts, each instantiated prompt is
// embedded, (by default) unit-normalized, averaged, and the mean re-normalized.
// The normalize_first flag selects raw averaging before the final normalize.
inline std::vector<std::vector<float>> class_embeddings(const EvalSpec& spec,
                                                        const Encoder& encoder,
                                                        bool use_prompts,
                                                        bool normalize_first = true) {
    spec.validate();
    if (use_prompts && spec.prompt_templates.empty())
        throw ConfigError("prompt ensembling requested but no templates given");
    std::vector<std::vector<float>> matrix;
    matrix.reserve(spec.class_names.size());
    for (const auto& name : spec.class_names) {
        std::vector<float> w;
        if (!use_prompts) {
            w = encoder.embed_text(name);
        } else {
            w.assign(encoder.dim(), 0.0f);
            for (const auto& tmpl : spec.prompt_templates) {
                std::vector<float> e =
                    encoder.embed_text(instantiate_template(tmpl, name));
                if (normalize_first && !detail::normalize_in_place(e))
                    throw ContractError("zero-norm embedding for class '" + name +
                                        "' under template '" + tmpl + "'");
                for (size_t i = 0; i < w.size() && i < e.size(); ++i) w[i] += e[i];
            }
            for (float& f : w) f = float(f / double(spec.prompt_templates.size()));
        }
        if (!detail::normalize_in_place(w))
            throw ContractError("zero-norm class embedding for '" + name + "'");
        matrix.push_back(std::move(w));
    }
    return matrix;
}

struct EvalResult {
    std::vector<size_t> predictions;
    double accuracy = 0.0;
};

// argmax_c dot(v, w_c); the class vectors are unit, so the per-image norm is
// a constant factor and plain dot products order the same as cosine.
inline EvalResult classify(const EvalSpec& spec,
                           const std::vector<std::vector<float>>& class_matrix,
                           const Encoder& encoder) {
    spec.validate();
    if (class_matrix.size() != spec.class_names.size())
        throw ContractError("class matrix rows != class count");
    EvalResult result;
    size_t correct = 0;
    for (const auto& item : spec.items) {
        std::vector<float> v = encoder.embed_image(item.image_ref);
        std::vector<double> scores(class_matrix.size());
        for (size_t c = 0; c < class_matrix.size(); ++c)
            scores[c] = detail::dot(v, class_matrix[c]);
        size_t pred = detail::argmax(scores);
        result.predictions.push_back(pred);
        if (pred == item.gold) ++correct;
    }
    result.accuracy =
        spec.items.empty() ? 0.0 : double(correct) / double(spec.items.size());
    return result;
}

struct ProtocolReport {
    double plain = 0.0;
    std::optional<double> prompted;
    double best = 0.0;
    std::string winner;  // "plain" | "prompted" | "tie"

    json to_json() const {
        json j{{"plain", plain}, {"best", best}, {"winner", winner}};
        j["prompted"] = prompted ? json(*prompted) : json(nullptr);
        return j;
    }
};

inline ProtocolReport best_of_protocols(const EvalSpec& spec, const Encoder& encoder,
                                        bool normalize_first = true) {
    ProtocolReport report;
    report.plain =
        classify(spec, class_embeddings(spec, encoder, false, normalize_first), encoder)
            .accuracy;
    report.best = report.plain;
    report.winner = "plain";
    if (!spec.prompt_templates.empty()) {
        report.prompted =
            classify(spec, class_embeddings(spec, encoder, true, normalize_first),
                     encoder)
                .accuracy;
        if (*report.prompted > report.plain) {
            report.best = *report.prompted;
            report.winner = "prompted";
        } else if (*report.prompted == report.plain) {
            report.winner = "tie";
        }
    }
    return report;
}

struct RetrievalResult {
    double i2t = 0.0;
    double t2i = 0.0;
    double average = 0.0;

    json to_json() const {
        return {{"i2t_recall1", i2t}, {"t2i_recall1", t2i}, {"average", average}};
    }
};

inline RetrievalResult retrieval_recall1(const RetrievalSpec& spec,
                                         const Encoder& encoder) {
    spec.validate();
    std::vector<std::vector<float>> images;
    std::vector<std::vector<float>> texts;
    std::vector<size_t> text_source;
    for (size_t i = 0; i < spec.pairs.size(); ++i) {
        std::vector<float> v = encoder.embed_image(spec.pairs[i].image_ref);
        detail::normalize_in_place(v);  // zero vectors stay zero: cos 0 everywhere
        images.push_back(std::move(v));
        for (const auto& t : spec.pairs[i].texts) {
            std::vector<float> e = encoder.embed_text(t);
            detail::normalize_in_place(e);
            texts.push_back(std::move(e));
            text_source.push_back(i);
        }
    }
    if (images.empty() || texts.empty()) return {};

    size_t i2t_hits = 0;
    for (size_t i = 0; i < images.size(); ++i) {
        std::vector<double> scores(texts.size());
        for (size_t j = 0; j < texts.size(); ++j)
            scores[j] = detail::dot(images[i], texts[j]);
        if (text_source[detail::argmax(scores)] == i) ++i2t_hits;
    }
    size_t t2i_hits = 0;
    for (size_t j = 0; j < texts.size(); ++j) {
        std::vector<double> scores(images.size());
        for (size_t i = 0; i < images.size(); ++i)
            scores[i] = detail::dot(texts[j], images[i]);
        if (detail::argmax(scores) == text_source[j]) ++t2i_hits;
    }
    RetrievalResult result;
    result.i2t = double(i2t_hits) / double(images.size());
    result.t2i = double(t2i_hits) / double(texts.size());
    result.average = (result.i2t + result.t2i) / 2.0;
    return result;
}

struct MultiNameReport {
    std::vector<ProtocolReport> variants;
    double best = 0.0;
    size_t best_variant = 0;

    json to_json() const {
        json vs = json::array();
        for (const auto& v : variants) vs.push_back(v.to_json());
        return {{"variants", vs}, {"best", best}, {"best_variant", best_variant}};
    }
};

// Same items, different class-name languages; report the best variant.
inline MultiNameReport multi_name_best(const std::vector<EvalSpec>& variants,
                                       const Encoder& encoder,
                                       bool normalize_first = true) {
    if (variants.empty()) throw ConfigError("multi_name_best needs >= 1 variant");
    for (size_t i = 1; i < variants.size(); ++i)
        if (!(variants[i].items == variants[0].items))
            throw ContractError("eval variants must share an identical item list");
    MultiNameReport report;
    for (const auto& spec : variants)
        report.variants.push_back(best_of_protocols(spec, encoder, normalize_first));
    for (size_t i = 0; i < report.variants.size(); ++i)
        if (report.variants[i].best > report.variants[report.best_variant].best)
            report.best_variant = i;
    report.best = report.variants[report.best_variant].best;
    return report;
}

// Toy deterministic encoder: images embed through the grayscale descriptor,
// texts through a character-trigram hash histogram. No semantics, but stable
// and dimension-compatible, which is all the harness tests need.
class SimpleEncoder : public Encoder {
public:
    size_t dim() const override { return backend_.dim(); }

    std::vector<float> embed_image(const std::string& image_ref) const override {
        std::ifstream in(image_ref, std::ios::binary);
        if (!in) throw FatalError("cannot open image for embedding: " + image_ref);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        auto gray = decode_gray(bytes);
        if (!gray) throw FatalError("cannot decode image for embedding: " + image_ref);
        return backend_.compute(*gray);
    }

    std::vector<float> embed_text(const std::string& text) const override {
        std::vector<float> v(dim(), 0.0f);
        std::string s = "^" + fold_key(text) + "$";
        for (size_t i = 0; i + 3 <= s.size(); ++i)
            v[fnv1a64(s.substr(i, 3)) % v.size()] += 1.0f;
        if (s.size() < 3) v[fnv1a64(s) % v.size()] += 1.0f;
        return v;
    }

private:
    GrayscaleDescriptor backend_;
};

}  // namespace kgharvest
