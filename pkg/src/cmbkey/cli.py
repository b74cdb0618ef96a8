"""Command-line driver: file-based pipeline stages with reproducible seeds.

Every stage reads and writes only the documented file formats, so each
intermediate is inspectable and any stage can be re-run on its own.  Exit
codes: 0 success, 1 validation or I/O error, 2 statistical-test failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import entropy, fileio, vernam
from .harmonics import bin_spectrum, make_binned_spectrum, make_binning, CrossSpectrumSet
from .likelihood import binned_loglike, estimate_noise_and_signal
from .pipeline import RunConfig, eve_agreement, harvest_stream, measure_binned, model_bins, simulate_maps

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmbkey",
        description="Simulated-sky power spectra as key material: "
                    "simulate, analyze, bin, extract, test, encrypt.",
    )
    parser.add_argument("--config", metavar="PATH", help="key = value config file")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--out", metavar="DIR", default=".", help="output directory")
    parser.add_argument("--print-config", action="store_true",
                        help="print the effective configuration and exit")
    parser.add_argument("--show-thresholds", action="store_true",
                        help="print the compiled-in FIPS 140-2 thresholds and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="write one noisy map per detector")
    p.add_argument("--realization", type=int, default=0)
    p.add_argument("--observer", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="pseudo-spectra of every detector pair from map files")
    p.add_argument("--maps", nargs="+", metavar="FILE", required=True)
    p.add_argument("--lmax", type=int, help="analysis band limit (default: config lmax)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bin", help="bin the mean of the given spectra into band powers")
    p.add_argument("--spectra", nargs="+", metavar="FILE", required=True)
    p.add_argument("--fsky", type=float, help="sky fraction for the mode counts")
    p.add_argument("--out-file", default="binned.txt")
    p.set_defaults(func=cmd_bin)

    p = sub.add_parser("likelihood", help="binned likelihood of data against a model")
    p.add_argument("--binned", metavar="FILE", required=True)
    p.add_argument("--model", metavar="FILE", required=True, help="model spectrum file")
    p.add_argument("--spectra", nargs="*", metavar="FILE", default=[],
                   help="pair spectra for the two-step noise estimate "
                        "(named ..._i_j, all autos and crosses)")
    p.set_defaults(func=cmd_likelihood)

    p = sub.add_parser("extract", help="harvest a bit stream from band powers")
    p.add_argument("--binned", metavar="FILE",
                   help="single binned-spectrum file (one-shot harvest)")
    p.add_argument("--model", metavar="FILE",
                   help="model spectrum file (required with --binned)")
    p.add_argument("--bits", type=int, help="target stream length "
                   "(config-driven multi-sky harvest; default: config key_bits)")
    p.add_argument("--observer", type=int, default=0)
    p.add_argument("--whiten", action="store_true", help="force von Neumann whitening")
    p.add_argument("--out-file", default="harvest.bits")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fips", help="FIPS 140-2 power-up tests on a 20,000-bit stream")
    p.add_argument("--bits", metavar="FILE", required=True)
    p.set_defaults(func=cmd_fips)

    p = sub.add_parser("keygen", help="combine two independent streams: K = V xor W")
    p.add_argument("--w", metavar="FILE", required=True, help="harvested stream W")
    p.add_argument("--v", metavar="FILE", help="independent stream V")
    p.add_argument("--v-seed", type=int,
                   help="generate V locally from the mixing generator with this seed")
    p.add_argument("--out-file", default="key.bits")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("matrix", help="random key matrix from a key sum or bit stream")
    p.add_argument("--key", help="key characters (their codes feed the key sum)")
    p.add_argument("--key-sum", type=int, help="explicit key sum")
    p.add_argument("--bits", metavar="FILE", help="bit stream to drive the shuffle")
    p.add_argument("--n", type=int, default=16, help="matrix dimension")
    p.add_argument("--out-file", default="matrix.txt")
    p.set_defaults(func=cmd_matrix)

    for name, helptext in (("encrypt", "one-time-pad encrypt a file"),
                           ("decrypt", "one-time-pad decrypt a file")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--in", dest="infile", metavar="FILE", required=True)
        p.add_argument("--pad", metavar="STORE", required=True, help="pad store file")
        p.add_argument("--from-bits", metavar="FILE",
                       help="initialize the pad store from this bit stream if absent")
        p.add_argument("--offset", type=int, help="explicit pad bit offset")
        p.add_argument("--out-file", required=True)
        p.set_defaults(func=cmd_encrypt if name == "encrypt" else cmd_decrypt)

    p = sub.add_parser("eve", help="same-sky, independent-noise agreement experiment")
    p.add_argument("--bits", type=int, help="stream length (default: config key_bits)")
    p.set_defaults(func=cmd_eve)

    return parser


def effective_config(args) -> RunConfig:
    mapping = {}
    if args.config:
        mapping = fileio.read_config(args.config)
    cfg = RunConfig.from_mapping(mapping)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = _outdir(args)
    maps = simulate_maps(cfg, args.realization, args.observer)
    for det, sky in enumerate(maps):
        path = out / f"map_d{det}.map"
        fileio.write_map(path, sky)
        print(path)
    model_path = out / "model.spec"
    fileio.write_spectrum(model_path, cfg.spectrum().values,
                          comments=["fiducial model spectrum (uK^2)"])
    print(model_path)
    return 0


def cmd_analyze(cfg: RunConfig, args) -> int:
    from .harmonics import analyze_map, pseudo_cross_spectrum

    out = _outdir(args)
    lmax = args.lmax if args.lmax is not None else cfg.lmax
    maps = [fileio.read_map(p) for p in args.maps]
    alms = [analyze_map(m, lmax) for m in maps]
    for i in range(len(alms)):
        for j in range(i, len(alms)):
            spec = pseudo_cross_spectrum(alms[i], alms[j])
            path = out / f"spec_{i}_{j}.spec"
            fileio.write_spectrum(path, spec.values,
                                  comments=[f"detectors {i} {j}", "pseudo-spectrum (uK^2)"])
            print(path)
    return 0


def cmd_bin(cfg: RunConfig, args) -> int:
    out = _outdir(args)
    stacks = [fileio.read_spectrum_values(p) for p in args.spectra]
    lmax = min(v.size - 1 for v in stacks)
    mean = np.mean([v[: lmax + 1] for v in stacks], axis=0)
    f_sky = args.fsky
    if f_sky is None:
        f_sky = cfg.mask().f_sky if cfg.uses_mask() else 1.0
    scheme = cfg.binning()
    binned = make_binned_spectrum(mean, scheme, f_sky,
                                  label=f"mean of {len(stacks)} spectra")
    path = out / args.out_file
    fileio.write_binned(path, binned)
    print(path)
    return 0


def cmd_likelihood(cfg: RunConfig, args) -> int:
    binned = fileio.read_binned(args.binned)
    model_spec = fileio.read_model_spectrum(args.model)
    model = bin_spectrum(model_spec, binned.scheme)
    value = binned_loglike(binned, model)
    print(f"negative log-likelihood L = {value:.6f} over {binned.scheme.n_bins} bins "
          f"(f_sky = {binned.f_sky})")
    if args.spectra:
        spectra = _load_pair_spectra(args.spectra)
        estimate = estimate_noise_and_signal(spectra)
        for i in range(estimate.n_detectors):
            mean_noise = estimate.noise[i, 2:].mean()
            nflag = int(estimate.flagged[i].sum())
            print(f"detector {i}: mean noise spectrum {mean_noise:.6g} uK^2 "
                  f"({nflag} flagged multipoles)")
    return 0


def _load_pair_spectra(paths) -> CrossSpectrumSet:
    """Reassemble a cross-spectrum set from spec_i_j files."""
    values = {}
    n_det = 0
    for p in paths:
        stem_parts = Path(p).stem.split("_")
        try:
            i, j = int(stem_parts[-2]), int(stem_parts[-1])
        except (IndexError, ValueError):
            raise ValueError(f"{p}: cannot infer detector pair from file name "
                             "(expected ..._i_j)") from None
        values[(i, j)] = fileio.read_spectrum_values(p)
        n_det = max(n_det, i + 1, j + 1)
    lmax = min(v.size - 1 for v in values.values())
    out = CrossSpectrumSet(n_detectors=n_det, lmax=lmax)
    for key, v in values.items():
        out.spectra[key] = v[: lmax + 1]
    for i in range(n_det):
        for j in range(i, n_det):
            if (i, j) not in out.spectra:
                raise ValueError(f"missing spectrum for detector pair ({i}, {j})")
    return out


def cmd_extract(cfg: RunConfig, args) -> int:
    out = _outdir(args)
    if args.whiten:
        cfg.whitening = "von-neumann"
    if args.binned:
        if not args.model:
            raise ValueError("--model is required with --binned")
        binned = fileio.read_binned(args.binned)
        model = bin_spectrum(fileio.read_model_spectrum(args.model), binned.scheme)
        stream = entropy.harvest_bits(binned, model, cfg.policy())
    else:
        stream = harvest_stream(cfg, args.bits, observer=args.observer)
    path = out / args.out_file
    fileio.write_bitstream(path, stream)
    print(f"{path} ({len(stream)} bits)")
    return 0


def cmd_fips(cfg: RunConfig, args) -> int:
    stream = fileio.read_bitstream(args.bits)
    report, all_pass = entropy.fips_report(stream)
    print(report, end="")
    return 0 if all_pass else 2


def cmd_keygen(cfg: RunConfig, args) -> int:
    out = _outdir(args)
    w = fileio.read_bitstream(args.w)
    if args.v:
        v = fileio.read_bitstream(args.v)
    elif args.v_seed is not None:
        v = entropy.generator_stream(args.v_seed, len(w))
    else:
        raise ValueError("provide --v FILE or --v-seed N for the independent stream")
    key = entropy.combine_keys(v, w)
    path = out / args.out_file
    fileio.write_bitstream(path, key)
    print(f"{path} ({len(key)} bits)")
    return 0


def cmd_matrix(cfg: RunConfig, args) -> int:
    out = _outdir(args)
    sources = [s for s in (args.key, args.key_sum, args.bits) if s is not None]
    if len(sources) != 1:
        raise ValueError("provide exactly one of --key, --key-sum, --bits")
    if args.key is not None:
        source = vernam.key_sum(args.key, len(args.key))
        print(f"key sum S = {source} (base {vernam.base_for_length(len(args.key))})")
    elif args.key_sum is not None:
        source = args.key_sum
    else:
        source = fileio.read_bitstream(args.bits)
    matrix = vernam.generate_key_matrix(source, args.n)
    path = out / args.out_file
    fileio.write_matrix(path, matrix)
    print(path)
    return 0


def _cipher(args, operation) -> int:
    out = _outdir(args)
    store_path = Path(args.pad)
    if not store_path.exists():
        if args.from_bits:
            fileio.create_pad_store(store_path, fileio.read_bitstream(args.from_bits))
        else:
            raise ValueError(f"pad store {store_path} does not exist "
                             "(use --from-bits to initialize it)")
    data = Path(args.infile).read_bytes()
    with fileio.PadStore(store_path) as store:
        result = operation(data, store.pad, store.ledger, args.offset)
        store.commit()
    path = out / args.out_file
    path.write_bytes(result)
    print(f"{path} ({len(result)} bytes, pad now at bit {store.ledger.consumed_bits})")
    return 0


def cmd_encrypt(cfg: RunConfig, args) -> int:
    return _cipher(args, vernam.vernam_encrypt)


def cmd_decrypt(cfg: RunConfig, args) -> int:
    return _cipher(args, vernam.vernam_decrypt)


def cmd_eve(cfg: RunConfig, args) -> int:
    n_bits = args.bits if args.bits is not None else cfg.key_bits
    alice, eve, fraction = eve_agreement(cfg, n_bits)
    # the acceptance band is the 20,000-bit binomial window, rescaled
    half_width = 0.012 * np.sqrt(20000.0 / n_bits)
    lo, hi = 0.5 - half_width, 0.5 + half_width
    verdict = "ok" if lo <= fraction <= hi else "OUT OF BAND"
    print(f"agreement {fraction:.6f} over {n_bits} bits "
          f"(expected within [{lo:.4f}, {hi:.4f}]): {verdict}")
    return 0 if verdict == "ok" else 2


def _show_thresholds():
    print(f"sample bits {entropy.FIPS_SAMPLE_BITS}")
    print(f"monobit open interval {entropy.MONOBIT_BOUNDS}")
    print(f"poker open interval {entropy.POKER_BOUNDS}")
    for i, (lo, hi) in enumerate(entropy.RUNS_BOUNDS):
        label = f"{i + 1}" if i < 5 else "6+"
        print(f"runs length {label} closed interval [{lo}, {hi}]")
    print(f"long run limit {entropy.LONGRUN_LIMIT}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.show_thresholds:
            _show_thresholds()
            return 0
        cfg = effective_config(args)
        if args.print_config:
            print(cfg.as_text(), end="")
            return 0
        if not getattr(args, "func", None):
            parser.print_help()
            return 1
        return args.func(cfg, args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
