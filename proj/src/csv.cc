/*
 * Copyright 2026 The pcpr Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <charconv>
#include <chrono>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "pcpr/data.h"

namespace pcpr {

std::vector<std::vector<std::string>> ParseCsvRecords(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  const std::size_t n = text.size();
  std::size_t i = 0;
  // Skip a UTF-8 byte order mark.
  if (text.rfind("\xEF\xBB\xBF", 0) == 0) i = 3;
  auto end_record = [&]() {
    record.push_back(std::move(field));
    field.clear();
    records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };
  for (; i < n; ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        if (i + 1 < n && text[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw Error("CSV: unterminated quoted field");
  if (field_started || !record.empty()) end_record();
  return records;
}

std::optional<double> ParseDateDays(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &consumed) != 3 ||
      consumed != 10) {
    return std::nullopt;
  }
  if (text.size() > 10) {
    int tail = 0;
    const int got = std::sscanf(text.c_str() + 10, "%c%2d:%2d%n:%2d%n", &sep,
                                &h, &mi, &tail, &s, &tail);
    if (got < 3 || (sep != 'T' && sep != ' ') ||
        static_cast<std::size_t>(10 + tail) != text.size()) {
      return std::nullopt;
    }
    if (h > 23 || mi > 59 || s > 60) return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return static_cast<double>(days) + (h * 3600.0 + mi * 60.0 + s) / 86400.0;
}

namespace {

std::optional<double> ParseNumber(const std::string& text) {
  std::size_t begin = 0, end = text.size();
  while (begin < end && text[begin] == ' ') ++begin;
  while (end > begin && text[end - 1] == ' ') --end;
  if (begin == end) return std::nullopt;
  if (text[begin] == '+') ++begin;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data() + begin, text.data() + end, value);
  if (ec != std::errc() || ptr != text.data() + end) return std::nullopt;
  return value;
}

bool IsMissing(const std::string& cell) { return cell.empty(); }

ColumnKind InferKind(const std::vector<std::vector<std::string>>& records,
                     std::size_t col) {
  bool all_numeric = true, all_dates = true, any = false;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const std::string& cell = records[r][col];
    if (IsMissing(cell)) continue;
    any = true;
    if (all_numeric && !ParseNumber(cell)) all_numeric = false;
    if (all_dates && !ParseDateDays(cell)) all_dates = false;
    if (!all_numeric && !all_dates) break;
  }
  if (!any) return ColumnKind::kCategorical;
  if (all_numeric) return ColumnKind::kNumerical;
  if (all_dates) return ColumnKind::kDate;
  return ColumnKind::kCategorical;
}

}  // namespace

TabularDataset ParseCsv(const std::string& text, const CsvOptions& options) {
  std::vector<std::vector<std::string>> records = ParseCsvRecords(text);
  // Trailing blank lines.
  while (!records.empty() && records.back().size() == 1 && records.back()[0].empty()) {
    records.pop_back();
  }
  if (records.empty()) throw Error("CSV: missing header row");
  const std::vector<std::string>& header = records[0];
  const std::size_t width = header.size();
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != width) {
      throw Error("CSV: row " + std::to_string(r) + " has " +
                  std::to_string(records[r].size()) + " fields, expected " +
                  std::to_string(width));
    }
  }
  std::size_t label_col = width;
  for (std::size_t c = 0; c < width; ++c) {
    if (header[c] == options.label_column) label_col = c;
  }
  if (label_col == width) {
    throw ConfigError("CSV: label column '" + options.label_column + "' not found");
  }
  for (const auto& [name, kind] : options.kind_overrides) {
    if (std::find(header.begin(), header.end(), name) == header.end()) {
      throw ConfigError("CSV: override for unknown column '" + name + "'");
    }
  }

  const std::size_t n = records.size() - 1;
  std::vector<ColumnSchema> schema;
  std::vector<std::size_t> source_cols;
  for (std::size_t c = 0; c < width; ++c) {
    if (c == label_col) continue;
    if (std::find(options.ignore_columns.begin(), options.ignore_columns.end(),
                  header[c]) != options.ignore_columns.end()) {
      continue;
    }
    ColumnSchema col;
    col.name = header[c];
    const auto it = options.kind_overrides.find(col.name);
    col.kind = it != options.kind_overrides.end() ? it->second : InferKind(records, c);
    schema.push_back(std::move(col));
    source_cols.push_back(c);
  }

  Eigen::MatrixXd cells(static_cast<Eigen::Index>(n),
                        static_cast<Eigen::Index>(schema.size()));
  for (std::size_t m = 0; m < schema.size(); ++m) {
    ColumnSchema& col = schema[m];
    const std::size_t c = source_cols[m];
    if (col.is_categorical()) {
      std::unordered_map<std::string, int> index;
      for (std::size_t r = 0; r < n; ++r) {
        const std::string& raw = records[r + 1][c];
        const std::string& key = IsMissing(raw) ? std::string(kMissingCategory) : raw;
        auto [it, inserted] = index.emplace(key, static_cast<int>(col.domain.size()));
        if (inserted) col.domain.push_back(key);
        cells(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(m)) = it->second;
      }
      continue;
    }
    // Numerical or date: missing cells take the column mean.
    std::vector<std::size_t> missing;
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t r = 0; r < n; ++r) {
      const std::string& raw = records[r + 1][c];
      if (IsMissing(raw)) {
        missing.push_back(r);
        continue;
      }
      const std::optional<double> value = col.kind == ColumnKind::kDate
                                              ? ParseDateDays(raw)
                                              : ParseNumber(raw);
      if (!value) {
        throw Error("CSV: row " + std::to_string(r + 1) + " column '" + col.name +
                    "': cannot parse '" + raw + "' as " + ColumnKindName(col.kind));
      }
      cells(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(m)) = *value;
      sum += *value;
      ++present;
    }
    const double mean = present > 0 ? sum / static_cast<double>(present) : 0.0;
    for (std::size_t r : missing) {
      cells(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(m)) = mean;
    }
  }

  std::vector<std::string> class_names = options.class_names;
  std::unordered_map<std::string, int> class_index;
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    class_index.emplace(class_names[i], static_cast<int>(i));
  }
  const bool fixed_classes = !class_names.empty();
  LabelVector labels(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::string& raw = records[r + 1][label_col];
    if (IsMissing(raw)) {
      throw Error("CSV: row " + std::to_string(r + 1) + ": missing label");
    }
    auto it = class_index.find(raw);
    if (it == class_index.end()) {
      if (fixed_classes) {
        throw Error("CSV: row " + std::to_string(r + 1) + ": label '" + raw +
                    "' is not a known class");
      }
      it = class_index.emplace(raw, static_cast<int>(class_names.size())).first;
      class_names.push_back(raw);
    }
    labels[r] = it->second;
  }
  const int num_classes = static_cast<int>(class_names.size());
  return TabularDataset(std::move(schema), std::move(cells), std::move(labels),
                        num_classes, std::move(class_names));
}

TabularDataset LoadCsv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open CSV file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return ParseCsv(buffer.str(), options);
}

namespace {

std::string QuoteField(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void WriteCsv(const TabularDataset& ds, const std::string& path,
              const std::string& label_column) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write CSV file '" + path + "'");
  for (int m = 0; m < ds.num_columns(); ++m) out << QuoteField(ds.column(m).name) << ',';
  out << QuoteField(label_column) << '\n';
  char buf[64];
  for (RowIndex r = 0; r < ds.num_rows(); ++r) {
    for (int m = 0; m < ds.num_columns(); ++m) {
      const ColumnSchema& col = ds.column(m);
      if (col.is_categorical()) {
        out << QuoteField(col.domain[ds.category(r, m)]);
      } else {
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), ds.value(r, m));
        out.write(buf, ptr - buf);
      }
      out << ',';
    }
    if (ds.has_labels()) out << QuoteField(ds.class_names()[ds.label(r)]);
    out << '\n';
  }
  if (!out) throw Error("failed writing CSV file '" + path + "'");
}

}  // namespace pcpr
