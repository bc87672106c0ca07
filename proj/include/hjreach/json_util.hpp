#pragma once

// Checked JSON reading: typed getters with field-path error messages and
// unknown-key rejection. Shared by the checkpoint and run-config schemas.

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hjreach/common.hpp"

namespace hjreach {

using Json = nlohmann::json;

/// View over a JSON object that records which keys were consumed; finish()
/// rejects anything left over. Error messages carry the dotted field path.
class JsonView {
public:
    JsonView(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw SchemaError(path_ + ": expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const Json& require(const std::string& key) {
        if (!j_.contains(key)) throw SchemaError(path_ + "." + key + ": missing required field");
        seen_.insert(key);
        return j_.at(key);
    }

    const Json* optional(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) return nullptr;
        return &j_.at(key);
    }

    JsonView object(const std::string& key) { return JsonView(require(key), sub(key)); }

    double number(const std::string& key) { return as_number(require(key), sub(key)); }

    std::int64_t integer(const std::string& key) { return as_integer(require(key), sub(key)); }

    bool boolean(const std::string& key) {
        const Json& v = require(key);
        if (!v.is_boolean()) throw SchemaError(sub(key) + ": expected a boolean");
        return v.get<bool>();
    }

    std::string string(const std::string& key) {
        const Json& v = require(key);
        if (!v.is_string()) throw SchemaError(sub(key) + ": expected a string");
        return v.get<std::string>();
    }

    std::vector<double> number_array(const std::string& key) {
        const Json& v = require(key);
        return as_number_array(v, sub(key));
    }

    std::vector<bool> bool_array(const std::string& key) {
        const Json& v = require(key);
        if (!v.is_array()) throw SchemaError(sub(key) + ": expected an array");
        std::vector<bool> out;
        for (const auto& e : v) {
            if (!e.is_boolean()) throw SchemaError(sub(key) + ": expected boolean entries");
            out.push_back(e.get<bool>());
        }
        return out;
    }

    std::vector<int> int_array(const std::string& key) {
        const Json& v = require(key);
        if (!v.is_array()) throw SchemaError(sub(key) + ": expected an array");
        std::vector<int> out;
        for (const auto& e : v) out.push_back(static_cast<int>(as_integer(e, sub(key))));
        return out;
    }

    /// Reject keys that no getter consumed.
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw SchemaError(path_ + "." + it.key() + ": unknown field");
    }

    const std::string& path() const { return path_; }

    static double as_number(const Json& v, const std::string& path) {
        if (!v.is_number()) throw SchemaError(path + ": expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw SchemaError(path + ": non-finite number");
        return d;
    }

    static std::int64_t as_integer(const Json& v, const std::string& path) {
        if (!v.is_number_integer()) throw SchemaError(path + ": expected an integer");
        return v.get<std::int64_t>();
    }

    static std::vector<double> as_number_array(const Json& v, const std::string& path) {
        if (!v.is_array()) throw SchemaError(path + ": expected an array");
        std::vector<double> out;
        out.reserve(v.size());
        for (const auto& e : v) out.push_back(as_number(e, path));
        return out;
    }

private:
    std::string sub(const std::string& key) const { return path_ + "." + key; }

    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace hjreach
