// SPDX-License-Identifier: Apache-2.0
//
// Localhost web host for harvest tests: synthesizes deterministic images,
// renders hosting pages with (deliberately sloppy) img markup, plants
// failures, and keeps an arrival-time log for politeness checks.
#pragma once

#include <chrono>
#include <mutex>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgharvest/image_io.hpp"
#include "kgharvest/jsonl.hpp"
#include "kgharvest/mock/mock_server.hpp"

namespace kgharvest {

struct MockWebImage {
    uint32_t width = 64;
    uint32_t height = 64;
    uint64_t seed = 0;
    std::string format = "png";  // png | bmp | ppm | pgm
    bool corrupt = false;        // bytes that no codec recognizes
    bool truncated = false;      // recognizable signature, undecodable body
};

struct MockWebPageImage {
    std::string src;
    std::string alt;
};

struct MockWebPage {
    std::vector<MockWebPageImage> images;
};

class MockWebServer : public MockHttpServer {
public:
    MockWebServer() {
        start_time_ = std::chrono::steady_clock::now();
        server_.Get(".*", [this](const httplib::Request& req, httplib::Response& res) {
            count_request();
            log_arrival(req.path);
            std::lock_guard<std::mutex> lock(mu_);
            if (failures_.count(req.path)) {
                res.status = 404;
                res.set_content("planted failure", "text/plain");
                return;
            }
            auto img = images_.find(req.path);
            if (img != images_.end()) {
                res.set_content(image_bytes_locked(req.path, img->second),
                                content_type(img->second));
                return;
            }
            auto page = pages_.find(req.path);
            if (page != pages_.end()) {
                res.set_content(render_page(req.path, page->second), "text/html");
                return;
            }
            res.status = 404;
            res.set_content("not found", "text/plain");
        });
    }

    void add_image(const std::string& path, MockWebImage image) {
        std::lock_guard<std::mutex> lock(mu_);
        images_[path] = image;
        bytes_cache_.erase(path);
    }

    void add_page(const std::string& path, MockWebPage page) {
        std::lock_guard<std::mutex> lock(mu_);
        pages_[path] = std::move(page);
    }

    void plant_failure(const std::string& path) {
        std::lock_guard<std::mutex> lock(mu_);
        failures_.insert(path);
    }

    // {"images": {path: {...}}, "pages": {path: {"images":[{src,alt}...]}},
    //  "failures": [path...]}
    void load_config(const json& cfg) {
        if (cfg.contains("images")) {
            for (auto it = cfg["images"].begin(); it != cfg["images"].end(); ++it) {
                const json& v = it.value();
                MockWebImage img;
                img.width = v.value("w", 64u);
                img.height = v.value("h", 64u);
                img.seed = v.value("seed", 0ull);
                img.format = v.value("format", "png");
                img.corrupt = v.value("corrupt", false);
                img.truncated = v.value("truncated", false);
                add_image(it.key(), img);
            }
        }
        if (cfg.contains("pages")) {
            for (auto it = cfg["pages"].begin(); it != cfg["pages"].end(); ++it) {
                MockWebPage page;
                for (const auto& pi : it.value().value("images", json::array()))
                    page.images.push_back(
                        {pi.at("src").get<std::string>(), pi.value("alt", "")});
                add_page(it.key(), std::move(page));
            }
        }
        if (cfg.contains("failures"))
            for (const auto& f : cfg["failures"]) plant_failure(f.get<std::string>());
    }

    // Milliseconds since server start for each request, in arrival order.
    std::vector<std::pair<double, std::string>> arrivals() const {
        std::lock_guard<std::mutex> lock(log_mu_);
        return arrivals_;
    }

    // The exact bytes a given image path serves (for hash assertions).
    std::string peek_image_bytes(const std::string& path) {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = images_.find(path);
        if (it == images_.end()) return {};
        return image_bytes_locked(path, it->second);
    }

private:
    static std::string content_type(const MockWebImage& img) {
        if (img.corrupt) return "application/octet-stream";
        if (img.format == "png") return "image/png";
        if (img.format == "bmp") return "image/bmp";
        return "image/x-portable-anymap";
    }

    std::string image_bytes_locked(const std::string& path, const MockWebImage& img) {
        auto cached = bytes_cache_.find(path);
        if (cached != bytes_cache_.end()) return cached->second;
        std::string bytes;
        if (img.corrupt) {
            bytes = "this is definitely not pixel data: " + path;
        } else if (img.truncated) {
            bytes = std::string("\x89PNG\r\n\x1a\n", 8) + "short";
        } else {
            auto rgb = synth_rgb(img.width, img.height, img.seed);
            if (img.format == "bmp") bytes = encode_bmp24(img.width, img.height, rgb);
            else if (img.format == "ppm") bytes = encode_ppm(img.width, img.height, rgb);
            else if (img.format == "pgm") {
                std::vector<unsigned char> gray(size_t(img.width) * img.height);
                for (size_t i = 0; i < gray.size(); ++i) gray[i] = rgb[i * 3];
                bytes = encode_pgm(img.width, img.height, gray);
            } else {
                bytes = encode_png_rgb(img.width, img.height, rgb);
            }
        }
        bytes_cache_[path] = bytes;
        return bytes;
    }

    static std::string escape_attr(const std::string& s) {
        std::string out;
        for (char c : s) {
            if (c == '&') out += "&amp;";
            else if (c == '"') out += "&quot;";
            else if (c == '<') out += "&lt;";
            else out += c;
        }
        return out;
    }

    // Deliberately messy markup: attribute order, casing, quoting, and
    // self-closing style vary; decoys and unclosed tags are sprinkled in.
    std::string render_page(const std::string& path, const MockWebPage& page) const {
        std::string html = "<!doctype html>\n<html><head><title>" + path +
                           "</title>\n<body>\n<h1>Gallery " + path + "<p>\n";
        size_t i = 0;
        for (const auto& img : page.images) {
            switch (i % 3) {
                case 0:
                    html += "<img src=\"" + escape_attr(img.src) + "\" alt=\"" +
                            escape_attr(img.alt) + "\">\n";
                    break;
                case 1:
                    html += "<IMG ALT='" + img.alt + "' SRC='" + img.src + "'/>\n";
                    break;
                default:
                    html += "<img   class=lazy alt=\"" + escape_attr(img.alt) + "\" src=" +
                            img.src + " >\n";
                    break;
            }
            ++i;
        }
        html += "<img src=\"/decoy-not-served.png\" alt=\"decoy image\">\n";
        html += "<imgx src=\"/not-an-img-tag.png\" alt=\"bogus\">\n";
        html += "<div><span>unclosed\n</html>\n";
        return html;
    }

    void log_arrival(const std::string& path) {
        auto now = std::chrono::steady_clock::now();
        double ms = std::chrono::duration<double, std::milli>(now - start_time_).count();
        std::lock_guard<std::mutex> lock(log_mu_);
        arrivals_.emplace_back(ms, path);
    }

    std::chrono::steady_clock::time_point start_time_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, MockWebImage> images_;
    std::unordered_map<std::string, MockWebPage> pages_;
    std::unordered_map<std::string, std::string> bytes_cache_;
    std::set<std::string> failures_;
    mutable std::mutex log_mu_;
    std::vector<std::pair<double, std::string>> arrivals_;
};

}  // namespace kgharvest
