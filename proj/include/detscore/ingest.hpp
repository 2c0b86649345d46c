#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "detscore/dataset.hpp"
#include "detscore/errors.hpp"
#include "detscore/features.hpp"

namespace detscore {

namespace detail {

// Shortest round-trip decimal form; re-parsing reproduces the exact double.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& cell, const std::string& where) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last || !std::isfinite(v))
        throw schema_error("non-numeric cell '" + cell + "' at " + where);
    return v;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of("\n\r") != std::string::npos)
        throw validation_error("csv: newline not allowed in field '" + s + "'");
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Manifest parsing
// ---------------------------------------------------------------------------

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* field,
                                           const std::string& record) {
    auto it = obj.find(field);
    if (it == obj.end())
        throw schema_error("missing field '" + std::string(field) + "' in record " + record);
    return *it;
}

inline double require_number(const nlohmann::json& obj, const char* field,
                             const std::string& record) {
    const auto& v = require_field(obj, field, record);
    if (!v.is_number())
        throw schema_error("field '" + std::string(field) + "' must be numeric in record " +
                           record);
    const double d = v.get<double>();
    if (!std::isfinite(d))
        throw schema_error("field '" + std::string(field) + "' must be finite in record " +
                           record);
    return d;
}

inline bounding_box parse_bbox(const nlohmann::json& v, bool corners, const std::string& record) {
    if (!v.is_array() || v.size() != 4)
        throw schema_error("field 'bbox' must be an array of 4 numbers in record " + record);
    double a[4];
    for (std::size_t i = 0; i < 4; ++i) {
        if (!v[i].is_number())
            throw schema_error("field 'bbox' must be numeric in record " + record);
        a[i] = v[i].get<double>();
        if (!std::isfinite(a[i]))
            throw schema_error("field 'bbox' must be finite in record " + record);
    }
    bounding_box b = corners ? box_from_corners(a[0], a[1], a[2], a[3])
                             : bounding_box{a[0], a[1], a[2], a[3]};
    if (!(b.w > 0.0 && b.h > 0.0))
        throw schema_error("field 'bbox' has negative or zero box dimensions in record " +
                           record);
    return b;
}

inline std::optional<polygon> parse_polygon(const nlohmann::json& obj, const std::string& record) {
    auto it = obj.find("polygon");
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_array())
        throw schema_error("field 'polygon' must be an array of [x,y] pairs in record " + record);
    polygon p;
    for (const auto& pt : *it) {
        if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number())
            throw schema_error("field 'polygon' must be an array of [x,y] pairs in record " +
                               record);
        p.push_back({pt[0].get<double>(), pt[1].get<double>()});
    }
    return p;
}

} // namespace detail

/// Parses an annotation/detection manifest (JSON, top-level `images` array)
/// into validated records. Boxes are normalized to (x,y,w,h) with top-left
/// origin — set top-level `"bbox_format": "xyxy"` for corner-format input —
/// and clamped to image bounds. Objects whose geometry degenerates (zero
/// area after clamping, bad polygons) are dropped; each drop appends one line
/// to `diagnostics` when provided. Structural problems (missing fields,
/// out-of-range scores, duplicate ids, nonpositive dimensions) throw.
inline dataset parse_dataset_json(const nlohmann::json& root,
                                  std::vector<std::string>* diagnostics = nullptr) {
    if (!root.is_object() || !root.contains("images") || !root["images"].is_array())
        throw schema_error("manifest must be an object with an 'images' array");

    bool corners = false;
    if (root.contains("bbox_format")) {
        const std::string fmt = root["bbox_format"].get<std::string>();
        if (fmt == "xyxy") corners = true;
        else if (fmt != "xywh")
            throw schema_error("field 'bbox_format' must be 'xywh' or 'xyxy'");
    }

    dataset ds;
    if (root.contains("provenance") && root["provenance"].is_string())
        ds.provenance = root["provenance"].get<std::string>();

    std::unordered_set<std::string> seen_ids;
    for (const auto& img : root["images"]) {
        if (!img.is_object()) throw schema_error("entries of 'images' must be objects");
        const auto& idv = detail::require_field(img, "id", "<unnamed>");
        if (!idv.is_string() || idv.get<std::string>().empty())
            throw schema_error("field 'id' must be a nonempty string");
        image_record rec;
        rec.id = idv.get<std::string>();
        if (!seen_ids.insert(rec.id).second)
            throw schema_error("duplicate image id '" + rec.id + "'");

        rec.width = detail::require_number(img, "width", rec.id);
        rec.height = detail::require_number(img, "height", rec.id);
        if (rec.width <= 0.0 || rec.height <= 0.0)
            throw schema_error("fields 'width'/'height' must be positive in record " + rec.id);

        const auto& groupv = detail::require_field(img, "group", rec.id);
        if (!groupv.is_string() || groupv.get<std::string>().empty())
            throw schema_error("field 'group' must be a nonempty string in record " + rec.id);
        rec.group = groupv.get<std::string>();

        auto drop = [&](const std::string& what, std::size_t index, const std::string& why) {
            if (diagnostics)
                diagnostics->push_back("image '" + rec.id + "': dropped " + what + " #" +
                                       std::to_string(index) + " (" + why + ")");
        };

        if (img.contains("ground_truth") && !img["ground_truth"].is_null()) {
            if (!img["ground_truth"].is_array())
                throw schema_error("field 'ground_truth' must be an array in record " + rec.id);
            rec.ground_truth.emplace();
            std::size_t index = 0;
            for (const auto& g : img["ground_truth"]) {
                const std::string where = rec.id + "/ground_truth";
                bounding_box raw = detail::parse_bbox(detail::require_field(g, "bbox", where),
                                                      corners, where);
                auto outline = detail::parse_polygon(g, where);
                auto clamped = clamp_to_image(raw, rec.width, rec.height);
                if (!clamped) {
                    drop("ground_truth", index, "zero area after clamping to image bounds");
                } else if (outline && !polygon_valid(*outline)) {
                    drop("ground_truth", index, "malformed polygon");
                } else {
                    rec.ground_truth->push_back({*clamped, std::move(outline)});
                }
                ++index;
            }
        }

        const auto& dets = detail::require_field(img, "detections", rec.id);
        if (!dets.is_array())
            throw schema_error("field 'detections' must be an array in record " + rec.id);
        std::size_t index = 0;
        for (const auto& d : dets) {
            const std::string where = rec.id + "/detections";
            bounding_box raw =
                detail::parse_bbox(detail::require_field(d, "bbox", where), corners, where);
            const double score = detail::require_number(d, "score", where);
            if (score < 0.0 || score > 1.0)
                throw schema_error("field 'score' out of range [0,1] in record " + where);
            auto outline = detail::parse_polygon(d, where);
            auto clamped = clamp_to_image(raw, rec.width, rec.height);
            if (!clamped) {
                drop("detection", index, "zero area after clamping to image bounds");
            } else if (outline && !polygon_valid(*outline)) {
                drop("detection", index, "malformed polygon");
            } else {
                rec.detections.push_back({*clamped, score, std::move(outline)});
            }
            ++index;
        }

        ds.images.push_back(std::move(rec));
    }

    if (ds.images.empty()) throw schema_error("manifest contains no images");
    return ds;
}

inline dataset parse_dataset_string(const std::string& text,
                                    std::vector<std::string>* diagnostics = nullptr) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw schema_error(std::string("manifest is not valid JSON: ") + e.what());
    }
    return parse_dataset_json(root, diagnostics);
}

inline dataset parse_dataset(const std::filesystem::path& path,
                             std::vector<std::string>* diagnostics = nullptr) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset_string(buf.str(), diagnostics);
}

/// Serializes a dataset back to the manifest schema (always canonical xywh
/// boxes). parse -> write -> parse is a fixed point.
inline nlohmann::json dataset_to_json(const dataset& ds) {
    nlohmann::json root;
    if (!ds.provenance.empty()) root["provenance"] = ds.provenance;
    root["images"] = nlohmann::json::array();
    auto box_json = [](const bounding_box& b) {
        return nlohmann::json::array({b.x, b.y, b.w, b.h});
    };
    auto poly_json = [](const polygon& p) {
        nlohmann::json arr = nlohmann::json::array();
        for (const point& v : p) arr.push_back(nlohmann::json::array({v.x, v.y}));
        return arr;
    };
    for (const image_record& rec : ds.images) {
        nlohmann::json img;
        img["id"] = rec.id;
        img["width"] = rec.width;
        img["height"] = rec.height;
        img["group"] = rec.group;
        if (rec.ground_truth) {
            img["ground_truth"] = nlohmann::json::array();
            for (const auto& g : *rec.ground_truth) {
                nlohmann::json o;
                o["bbox"] = box_json(g.box);
                if (g.outline) o["polygon"] = poly_json(*g.outline);
                img["ground_truth"].push_back(std::move(o));
            }
        }
        img["detections"] = nlohmann::json::array();
        for (const detection& d : rec.detections) {
            nlohmann::json o;
            o["bbox"] = box_json(d.box);
            o["score"] = d.score;
            if (d.outline) o["polygon"] = poly_json(*d.outline);
            img["detections"].push_back(std::move(o));
        }
        root["images"].push_back(std::move(img));
    }
    return root;
}

inline void write_dataset(const dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write dataset file '" + path.string() + "'");
    out << dataset_to_json(ds).dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// Feature matrix I/O
// ---------------------------------------------------------------------------

/// Optional regression targets attached to a feature row.
struct target_triple {
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    friend bool operator==(const target_triple&, const target_triple&) = default;
};

struct feature_row {
    std::string id;
    std::string group; ///< may be empty for hand-built rows
    feature_vector features;
    std::optional<target_triple> targets;
    friend bool operator==(const feature_row&, const feature_row&) = default;
};

/// Writes rows as CSV: id, [group,] the 18 canonical feature columns, then
/// f1/precision/recall when every row carries targets. Values are printed at
/// full precision so a read reproduces them bit-exactly.
inline void write_feature_matrix(const std::vector<feature_row>& rows,
                                 const std::filesystem::path& path) {
    bool with_group = false;
    std::size_t with_targets = 0;
    for (const feature_row& r : rows) {
        if (!r.group.empty()) with_group = true;
        if (r.targets) ++with_targets;
    }
    if (with_targets != 0 && with_targets != rows.size())
        throw validation_error("write_feature_matrix: inconsistent rows, " +
                               std::to_string(with_targets) + " of " +
                               std::to_string(rows.size()) + " have targets");

    std::ofstream out(path);
    if (!out) throw io_error("cannot write feature matrix '" + path.string() + "'");

    out << "id";
    if (with_group) out << ",group";
    for (const std::string& name : feature_names()) out << ',' << name;
    if (with_targets > 0) out << ",f1,precision,recall";
    out << '\n';

    for (const feature_row& r : rows) {
        out << detail::csv_escape(r.id);
        if (with_group) out << ',' << detail::csv_escape(r.group);
        for (double v : r.features.to_array()) out << ',' << detail::format_double(v);
        if (with_targets > 0) {
            out << ',' << detail::format_double(r.targets->f1) << ','
                << detail::format_double(r.targets->precision) << ','
                << detail::format_double(r.targets->recall);
        }
        out << '\n';
    }
    if (!out) throw io_error("failed writing feature matrix '" + path.string() + "'");
}

/// Inverse of write_feature_matrix. Columns are keyed by name, so any column
/// order is accepted; the canonical order is restored on read. The header
/// must name all 18 features, and the target columns must appear as a
/// complete triple or not at all.
inline std::vector<feature_row> read_feature_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open feature matrix '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line))
        throw schema_error("feature matrix '" + path.string() + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = detail::csv_split(line);

    int id_col = -1;
    int group_col = -1;
    int target_cols[3] = {-1, -1, -1};
    std::vector<int> feat_cols(k_n_features, -1);
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string& name = header[c];
        if (name == "id") id_col = static_cast<int>(c);
        else if (name == "group") group_col = static_cast<int>(c);
        else if (name == "f1") target_cols[0] = static_cast<int>(c);
        else if (name == "precision") target_cols[1] = static_cast<int>(c);
        else if (name == "recall") target_cols[2] = static_cast<int>(c);
        else {
            const int fi = feature_index(name);
            if (fi < 0)
                throw schema_error("header mismatch: unknown column '" + name + "' in '" +
                                   path.string() + "'");
            if (feat_cols[static_cast<std::size_t>(fi)] != -1)
                throw schema_error("header mismatch: duplicate column '" + name + "'");
            feat_cols[static_cast<std::size_t>(fi)] = static_cast<int>(c);
        }
    }
    if (id_col < 0) throw schema_error("header mismatch: missing column 'id'");
    for (std::size_t i = 0; i < k_n_features; ++i) {
        if (feat_cols[i] < 0)
            throw schema_error("header mismatch: missing feature column '" + feature_names()[i] +
                               "'");
    }
    const int n_targets = (target_cols[0] >= 0) + (target_cols[1] >= 0) + (target_cols[2] >= 0);
    if (n_targets != 0 && n_targets != 3)
        throw schema_error("header mismatch: target columns f1/precision/recall must appear "
                           "together");

    std::vector<feature_row> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> cells = detail::csv_split(line);
        if (cells.size() != header.size())
            throw schema_error("row width mismatch at line " + std::to_string(lineno) + " in '" +
                               path.string() + "'");
        feature_row r;
        r.id = cells[static_cast<std::size_t>(id_col)];
        if (group_col >= 0) r.group = cells[static_cast<std::size_t>(group_col)];
        std::array<double, k_n_features> vals{};
        for (std::size_t i = 0; i < k_n_features; ++i) {
            const std::string& cell = cells[static_cast<std::size_t>(feat_cols[i])];
            vals[i] = detail::parse_double(cell, "line " + std::to_string(lineno) + " column '" +
                                                     feature_names()[i] + "'");
        }
        r.features = feature_vector::from_array(vals);
        if (n_targets == 3) {
            target_triple t;
            const std::string where = "line " + std::to_string(lineno);
            t.f1 = detail::parse_double(cells[static_cast<std::size_t>(target_cols[0])],
                                        where + " column 'f1'");
            t.precision = detail::parse_double(cells[static_cast<std::size_t>(target_cols[1])],
                                               where + " column 'precision'");
            t.recall = detail::parse_double(cells[static_cast<std::size_t>(target_cols[2])],
                                            where + " column 'recall'");
            r.targets = t;
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace detscore
