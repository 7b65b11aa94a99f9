#include "ncl/io.hpp"

#include "ncl/config.hpp"
#include "ncl/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ncl {

namespace {

constexpr char kMagic[8] = {'N', 'C', 'L', 'C', 'K', 'P', 'T', '\0'};

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  require(static_cast<bool>(out), Errc::IoError, "cannot write " + path.string());
  return out;
}

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& what) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  require(in.gcount() == static_cast<std::streamsize>(sizeof(T)), Errc::IoError, "checkpoint truncated in " + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

void put_block(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_le<double>(out, m(r, c));
}

Matrix get_block(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get_le<double>(in, "parameter block");
  return m;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const Matrix& m) {
  auto out = open_out(path);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
    out << "\n";
  }
}

Matrix read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::IoError, "cannot read " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail(Errc::IoError, path.string() + ": bad number '" + cell + "'");
      }
    }
    require(rows.empty() || row.size() == rows.front().size(), Errc::IoError, path.string() + ": ragged rows");
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace) {
  auto out = open_out(path);
  out << "step,loss,grad_norm,dead_dims,ms\n";
  for (size_t i = 0; i < trace.steps(); ++i)
    out << i + 1 << "," << format_double(trace.loss[i]) << "," << format_double(trace.grad_norm[i]) << ","
        << trace.dead_dims[i] << "," << format_double(trace.ms[i]) << "\n";
}

void write_table_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows) {
  auto out = open_out(path);
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<const Encoder*>& encoders) {
  nlohmann::json header;
  header["format"] = "ncl-checkpoint";
  header["encoders"] = nlohmann::json::array();
  for (const Encoder* e : encoders) {
    nlohmann::json h;
    h["kind"] = e->kind();
    h["layer_sizes"] = e->layer_sizes();
    h["transform"] = e->transform() ? transform_name(*e->transform()) : "none";
    h["seed"] = e->seed();
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& p : e->params()) blocks.push_back({p.rows(), p.cols()});
    const auto* mlp = dynamic_cast<const MlpEncoder*>(e);
    const bool custom = mlp && !mlp->default_embedding();
    if (custom) blocks.push_back({mlp->embedding().rows(), mlp->embedding().cols()});
    h["custom_embedding"] = custom;
    h["blocks"] = blocks;
    header["encoders"].push_back(h);
  }
  const std::string text = header.dump();

  auto out = open_out(path, std::ios::out | std::ios::binary);
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Encoder* e : encoders) {
    for (const auto& p : e->params()) put_block(out, p);
    const auto* mlp = dynamic_cast<const MlpEncoder*>(e);
    if (mlp && !mlp->default_embedding()) put_block(out, mlp->embedding());
  }
  require(static_cast<bool>(out), Errc::IoError, "failed writing " + path.string());
}

std::vector<std::unique_ptr<Encoder>> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::IoError, "cannot read checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  require(in.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0, Errc::IoError, path.string() + " is not a checkpoint");
  const auto version = get_le<std::uint32_t>(in, "version");
  require(version == kCheckpointVersion, Errc::IoError, "unsupported checkpoint version " + std::to_string(version));
  const auto len = get_le<std::uint64_t>(in, "header length");
  require(len < (1u << 26), Errc::IoError, "checkpoint header too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  require(in.gcount() == static_cast<std::streamsize>(len), Errc::IoError, "checkpoint truncated in header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::IoError, std::string("checkpoint header: ") + e.what());
  }
  std::vector<std::unique_ptr<Encoder>> out;
  try {
    for (const auto& h : header.at("encoders")) {
      const std::string tname = h.at("transform").get<std::string>();
      std::optional<NonNegTransform> t;
      if (tname != "none") t = parse_transform(tname);
      const auto seed = h.at("seed").get<std::uint64_t>();
      std::vector<Matrix> blocks;
      for (const auto& b : h.at("blocks")) blocks.push_back(get_block(in, b.at(0).get<Eigen::Index>(), b.at(1).get<Eigen::Index>()));
      const std::string kind = h.at("kind").get<std::string>();
      if (kind == "tabular") {
        require(blocks.size() == 1, Errc::IoError, "tabular checkpoint needs one block");
        out.push_back(std::make_unique<TabularEncoder>(std::move(blocks[0]), t, seed));
      } else if (kind == "mlp") {
        std::optional<Matrix> embedding;
        if (h.at("custom_embedding").get<bool>()) {
          embedding = std::move(blocks.back());
          blocks.pop_back();
        }
        auto enc = std::make_unique<MlpEncoder>(h.at("layer_sizes").get<std::vector<int>>(), t, seed, embedding);
        auto& params = enc->mutable_params();
        require(params.size() == blocks.size(), Errc::IoError, "MLP checkpoint block count mismatch");
        for (size_t i = 0; i < blocks.size(); ++i) {
          require(params[i].rows() == blocks[i].rows() && params[i].cols() == blocks[i].cols(), Errc::IoError,
                  "MLP checkpoint block shape mismatch");
          params[i] = std::move(blocks[i]);
        }
        out.push_back(std::move(enc));
      } else {
        fail(Errc::IoError, "unknown encoder kind '" + kind + "' in checkpoint");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::IoError, std::string("checkpoint header: ") + e.what());
  }
  return out;
}

}  // namespace ncl
