#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tie/tensor.hpp"

namespace tie {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// doubles are serialized with %.17g so a replayed run reproduces every CSV
// byte for byte
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : os_(path) {
    if (!os_) throw IoError("csv: cannot open " + path + " for writing");
    path_ = path;
  }

  void header(const std::vector<std::string>& cols) { row_strings(cols); }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      os_ << (i ? "," : "") << cells[i];
    os_ << "\n";
  }

  // mixed row: every cell already rendered; doubles go through format_double
  class Row {
   public:
    explicit Row(CsvWriter& w) : w_(w) {}
    Row& add(const std::string& s) {
      cells_.push_back(s);
      return *this;
    }
    Row& add(double v) {
      cells_.push_back(format_double(v));
      return *this;
    }
    Row& add(std::size_t v) {
      cells_.push_back(std::to_string(v));
      return *this;
    }
    Row& add(int v) {
      cells_.push_back(std::to_string(v));
      return *this;
    }
    ~Row() { w_.row_strings(cells_); }

   private:
    CsvWriter& w_;
    std::vector<std::string> cells_;
  };

  Row row() { return Row(*this); }

  void close() {
    os_.close();
    if (!os_) throw IoError("csv: write to " + path_ + " failed");
  }

 private:
  std::ofstream os_;
  std::string path_;
};

// minimal reader for the repo's own numeric CSV exports
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("csv: cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline std::vector<std::vector<double>> read_numeric_csv(
    const std::string& path, bool skip_header) {
  auto rows = read_csv(path);
  std::vector<std::vector<double>> out;
  for (std::size_t i = skip_header ? 1 : 0; i < rows.size(); ++i) {
    std::vector<double> r;
    r.reserve(rows[i].size());
    for (const std::string& c : rows[i]) r.push_back(std::stod(c));
    out.push_back(std::move(r));
  }
  return out;
}

// ------------------------------------------------------------------- pgm --

// binary PGM (P5, maxval 255); pixel byte = round(255 * value), half up
inline void write_pgm(const std::string& path, const std::vector<double>& img,
                      std::size_t height, std::size_t width) {
  if (img.size() != height * width)
    throw IoError("pgm: pixel count " + std::to_string(img.size()) +
                  " does not match " + std::to_string(height) + "x" +
                  std::to_string(width));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("pgm: cannot open " + path + " for writing");
  os << "P5\n" << width << " " << height << "\n255\n";
  std::vector<unsigned char> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::floor(img[i] * 255.0 + 0.5);
    bytes[i] = static_cast<unsigned char>(std::min(255.0, std::max(0.0, v)));
  }
  os.write(reinterpret_cast<char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("pgm: write to " + path + " failed");
}

struct PgmImage {
  std::size_t height = 0, width = 0;
  std::vector<unsigned char> pixels;
};

inline PgmImage read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("pgm: cannot open " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw IoError("pgm: " + path + " is not binary P5");
  std::size_t w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  if (maxval != 255) throw IoError("pgm: " + path + ": unsupported maxval");
  is.get();  // single whitespace after header
  PgmImage img;
  img.height = h;
  img.width = w;
  img.pixels.resize(h * w);
  is.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(h * w));
  if (static_cast<std::size_t>(is.gcount()) != h * w)
    throw IoError("pgm: " + path + ": truncated pixel data");
  return img;
}

inline void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << body;
  if (!os) throw IoError("write to " + path + " failed");
}

}  // namespace tie
