#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace glamap::io {

/// Minimal TOML subset: [table] / [a.b] headers, `key = value` pairs with
/// string/integer/float/bool scalars and flat arrays of those, `#` comments.
/// Keys are stored dotted ("train.lr_init"). Covers run configs and synthetic
/// scene specs; not a general TOML implementation.
class Toml {
public:
    static Toml parse(const std::string& text);
    static Toml parse_file(const std::string& path);

    bool has(const std::string& key) const;
    std::vector<std::string> keys() const;
    /// Keys under `prefix.` (returned without the prefix).
    std::vector<std::string> keys_under(const std::string& prefix) const;

    std::string get_string(const std::string& key) const;
    int64_t get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<double> get_double_array(const std::string& key) const;
    std::vector<std::string> get_string_array(const std::string& key) const;

    std::string get_string_or(const std::string& key, const std::string& dflt) const;
    int64_t get_int_or(const std::string& key, int64_t dflt) const;
    double get_double_or(const std::string& key, double dflt) const;
    bool get_bool_or(const std::string& key, bool dflt) const;

    void set_string(const std::string& key, const std::string& v);
    void set_int(const std::string& key, int64_t v);
    void set_double(const std::string& key, double v);
    void set_bool(const std::string& key, bool v);
    void set_double_array(const std::string& key, const std::vector<double>& v);
    void set_string_array(const std::string& key, const std::vector<std::string>& v);

    std::string serialize() const;
    void write_file(const std::string& path) const;

private:
    struct Value {
        enum class Kind { String, Int, Float, Bool, ArrayFloat, ArrayString };
        Kind kind = Kind::String;
        std::string s;
        int64_t i = 0;
        double f = 0;
        bool b = false;
        std::vector<double> af;
        std::vector<std::string> as;
    };
    const Value& at(const std::string& key) const;
    std::map<std::string, Value> values_;
};

}  // namespace glamap::io
