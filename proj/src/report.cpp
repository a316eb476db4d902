#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>

#include "pathtransport/scenario.hpp"

namespace pt {

namespace {

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

template <std::size_t R>
Json nest(const Tensor<R>& t, std::size_t axis, std::size_t offset) {
    Json arr = Json::array();
    const int extent = t.extent(axis);
    std::size_t stride = 1;
    for (std::size_t k = axis + 1; k < R; ++k) stride *= static_cast<std::size_t>(t.extent(k));
    for (int i = 0; i < extent; ++i) {
        const std::size_t off = offset + static_cast<std::size_t>(i) * stride;
        if (axis + 1 == R)
            arr.push_back(number(t.data()[off]));
        else
            arr.push_back(nest(t, axis + 1, off));
    }
    return arr;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string scalar_text(const Json& v) {
    if (v.is_null()) return "";
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_float()) return format_double(v.get<double>());
    if (v.is_number()) return v.dump();
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

void flatten_indexed(const Json& values, const Json& index, std::size_t depth, const std::string& prefix,
                     std::ostringstream& os) {
    if (!values.is_array()) {
        os << csv_escape(prefix) << ',' << csv_escape(scalar_text(values)) << '\n';
        return;
    }
    const std::string name = depth < index.size() ? index[depth].get<std::string>() : "k";
    for (std::size_t k = 0; k < values.size(); ++k)
        flatten_indexed(values[k], index, depth + 1, prefix + "[" + name + "=" + std::to_string(k + 1) + "]", os);
}

void flatten(const Json& v, const std::string& prefix, std::ostringstream& os) {
    if (v.is_object()) {
        if (v.contains("index") && v.contains("values") && v.size() == 2) {
            flatten_indexed(v["values"], v["index"], 0, prefix, os);
            return;
        }
        for (const auto& [key, child] : v.items()) flatten(child, prefix.empty() ? key : prefix + "." + key, os);
        return;
    }
    if (v.is_array()) {
        for (std::size_t k = 0; k < v.size(); ++k) flatten(v[k], prefix + "[" + std::to_string(k + 1) + "]", os);
        return;
    }
    os << csv_escape(prefix) << ',' << csv_escape(scalar_text(v)) << '\n';
}

}  // namespace

Json indexed(const std::vector<std::string>& index, const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
        rows.push_back(std::move(row));
    }
    return Json{{"index", index}, {"values", rows}};
}

Json indexed(const std::vector<std::string>& index, const Vector& v) {
    Json arr = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(number(v[i]));
    return Json{{"index", index}, {"values", arr}};
}

template <std::size_t R>
Json indexed(const std::vector<std::string>& index, const Tensor<R>& t) {
    return Json{{"index", index}, {"values", nest(t, 0, 0)}};
}
template Json indexed<3>(const std::vector<std::string>&, const Tensor<3>&);
template Json indexed<4>(const std::vector<std::string>&, const Tensor<4>&);

std::string config_hash(const Json& canonical) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : canonical.dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string render_json(const Json& report) { return report.dump(2) + "\n"; }

std::string render_csv(const Json& report) {
    std::ostringstream os;
    os << "field,value\n";
    flatten(report, "", os);
    return os.str();
}

}  // namespace pt
