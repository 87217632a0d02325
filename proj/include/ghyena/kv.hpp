#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace ghyena {

// Flat key=value config text: one pair per line (';' also accepted as a
// separator), '#' starts a comment.
using KvMap = std::map<std::string, std::string>;

KvMap parse_kv(const std::string& text);
std::string serialize_kv(const KvMap& kv);

std::string kv_get(const KvMap& kv, const std::string& key, const std::string& fallback);
int64_t kv_get_int(const KvMap& kv, const std::string& key, int64_t fallback);
double kv_get_double(const KvMap& kv, const std::string& key, double fallback);
bool kv_get_bool(const KvMap& kv, const std::string& key, bool fallback);

// Locale-independent numeric formatting (std::to_chars), round-trip exact.
std::string format_double(double v);
std::string format_int(int64_t v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace ghyena
