import math
from abc import ABC, abstractmethod
from dataclasses import asdict

import numpy as np

from fluoro import detection, oracle, svg, trajectories, weak
from fluoro.config import MODES, PREPARATIONS, POSTSELECTIONS, SELECTIONS, load_run_config
from fluoro.errors import ConfigError, FluoroError, NumericalError, StatisticalFailure
from fluoro.serializer import (CutRowSerializer, McComparisonSerializer, McRowSerializer, MapRowSerializer,
                               TraceRowSerializer, write_json)
from fluoro.settings import logger, set_log_level

IO_EXIT_CODE = 3
DEFAULT_CUT_TIMES = (0.99, 1.44)
DEFAULT_TRACE_RABI_FREQS = (0.6, 1.0, 1.4)
# |z| above this in any record bin fails an mc run
HARD_Z_LIMIT = 5.0
SOFT_Z_LIMIT = 3.0


class BaseCommand(ABC):
    help = ''

    def add_arguments(self, parser):
        pass

    def overrides(self, args):
        return {
            'model': {},
            'mc': {'master_seed': args.seed},
            'fluoro': {
                'output_dir': args.out,
                'emit_svg': True if args.svg else None,
                'workers': args.workers,
                'log_level': args.log_level,
            },
        }

    @abstractmethod
    def handle(self, args, run):
        pass

    def process(self, args):
        """Run the command and translate failures into exit codes."""
        try:
            run = load_run_config(args.config, **self.overrides(args))
            set_log_level(run.log_level)
            self.handle(args, run)
        except FluoroError as e:
            logger.error(e, exc_info=True)
            return e.exit_code
        except OSError as e:
            logger.error(e, exc_info=True)
            return IO_EXIT_CODE
        except (ArithmeticError, np.linalg.LinAlgError) as e:
            logger.error(e, exc_info=True)
            return NumericalError.exit_code
        return 0


def map_rows(conditional_map):
    """Time-major rows of a map."""
    denominators = conditional_map.denominators
    for i, t in enumerate(conditional_map.times):
        for j, nu_r in enumerate(conditional_map.rabi_freqs):
            value = conditional_map.values[i, j]
            yield {
                't_us': t,
                'nu_r_mhz': nu_r,
                're_value': value.real,
                'im_value': value.imag,
                'denominator': None if denominators is None else denominators[i, j],
            }


def violation_summary(conditional_map):
    report = weak.bound_violation_contours(conditional_map)
    value, t, nu_r = conditional_map.extremum()
    return {
        'mode': conditional_map.mode,
        'prep': conditional_map.prep,
        'post': conditional_map.post,
        'violating_cells': len(report),
        'missing_cells': int(conditional_map.missing.sum()),
        'components': [asdict(component) for component in report.components],
        'extremum': {'re_value': value, 't_us': t, 'nu_r_mhz': nu_r},
    }


class MapCommand(BaseCommand):
    help = "Conditional average of sigma_- over the (t, nu_r) grid"

    def add_arguments(self, parser):
        parser.add_argument('--mode', choices=MODES, required=True)
        parser.add_argument('--prep', choices=PREPARATIONS)
        parser.add_argument('--post', choices=POSTSELECTIONS)
        parser.add_argument('--filtered', action='store_true', help="also write the detection-filtered map")

    @staticmethod
    def resolve_selection(args):
        prep = args.prep or ('maximally_mixed' if args.mode == 'post_only' else 'e')
        post = args.post or ('none' if args.mode == 'pre_only' else 'g')
        return prep, post

    def handle(self, args, run):
        prep, post = self.resolve_selection(args)
        stride = run.grid.time_stride(run.model)
        out = run.output_path
        if args.filtered:
            full = weak.build_map(run.model, run.grid.rabi_freqs, args.mode, prep, post, 1, run.workers)
            filtered = detection.filter_map(full, run.detection, run.filter_engine).subsample(stride)
            MapRowSerializer().write(out / f'{args.mode}_filtered.csv', map_rows(filtered))
            result = full.subsample(stride)
        else:
            result = weak.build_map(run.model, run.grid.rabi_freqs, args.mode, prep, post, stride, run.workers)
        path = MapRowSerializer().write(out / f'{args.mode}.csv', map_rows(result))
        logger.info(f"Wrote {path}")
        summary = violation_summary(result)
        write_json(out / f'{args.mode}_violations.json', summary)
        logger.info(f"{summary['violating_cells']} cells beyond the classical range, "
                    f"extremum {summary['extremum']['re_value']:.4g}")
        if run.emit_svg:
            svg.write_heatmap(out / f'{args.mode}.svg', result, title=f"{args.mode} prep={prep} post={post}")


def even_rotation_freqs(duration, nu_r_max):
    """Rabi frequencies at which the qubit turns by an even multiple of pi in ``duration``."""
    return [k / duration for k in range(int(math.floor(nu_r_max * duration + 1e-9)) + 1)]


class CutCommand(BaseCommand):
    help = "Conditioned and unconditioned values against nu_r at fixed times"

    def add_arguments(self, parser):
        parser.add_argument('--times', type=float, nargs='+', default=list(DEFAULT_CUT_TIMES),
                            help="cut times in us, on the map grid")
        parser.add_argument('--prep', choices=PREPARATIONS, default='e')
        parser.add_argument('--post', choices=('g', 'e'), default='g')

    def handle(self, args, run):
        stride = run.grid.time_stride(run.model)
        grid_times = run.model.times[::stride]
        for t in args.times:
            if np.min(np.abs(grid_times - t)) > 1e-9:
                raise ConfigError(f"cut time {t} us is not on the {run.grid.t_step} us grid")
        rabi = run.grid.rabi_freqs
        conditioned = weak.build_map(run.model, rabi, 'pre_and_post', args.prep, args.post, stride, run.workers)
        unconditioned = weak.build_map(run.model, rabi, 'pre_only', args.prep, 'none', stride, run.workers)

        rows, cuts = [], []
        for t in args.times:
            index = conditioned.time_index(t)
            values = conditioned.values[index].real
            reference = unconditioned.values[index].real
            for j, nu_r in enumerate(rabi):
                rows.append({
                    't_us': conditioned.times[index],
                    'nu_r_mhz': nu_r,
                    'conditioned_re': values[j],
                    'unconditioned_re': reference[j],
                    'denominator': conditioned.denominators[index, j],
                })
            slope = weak.max_slope(rabi, values)
            reference_slope = weak.max_slope(rabi, reference)
            cuts.append({
                't_us': float(conditioned.times[index]),
                'max_slope_conditioned': slope,
                'max_slope_unconditioned': reference_slope,
                'slope_ratio': slope / reference_slope if reference_slope > 0 else None,
                'zero_crossings_mhz': weak.zero_crossings(rabi, values),
                'even_rotation_mhz': even_rotation_freqs(run.model.duration, float(rabi[-1])),
            })
            logger.info(f"t={t} us: max slope {slope:.4g} conditioned vs {reference_slope:.4g} unconditioned")
        out = run.output_path
        path = CutRowSerializer().write(out / 'cut.csv', rows)
        write_json(out / 'cut_summary.json', {'prep': args.prep, 'post': args.post, 'cuts': cuts})
        logger.info(f"Wrote {path}")


def z_statistics(z):
    finite = np.abs(z[np.isfinite(z)])
    if not finite.size:
        return None, None
    return float(np.mean(finite < SOFT_Z_LIMIT)), float(finite.max())


class McCommand(BaseCommand):
    help = "Monte Carlo conditional averages of simulated heterodyne records"

    def add_arguments(self, parser):
        parser.add_argument('--selection', choices=SELECTIONS + ('all',),
                            help="final readout selection, 'all' for every selection")
        parser.add_argument('--n-traj', type=int)
        parser.add_argument('--prep', choices=PREPARATIONS)
        parser.add_argument('--nu-r', type=float, help="Rabi frequency (MHz)")
        parser.add_argument('--eta', type=float, help="detection efficiency")

    def overrides(self, args):
        overrides = super().overrides(args)
        overrides['model']['nu_r'] = args.nu_r
        overrides['mc'].update({
            'n_traj': args.n_traj,
            'prep': args.prep,
            'eta': args.eta,
            'selection': None if args.selection == 'all' else args.selection,
        })
        return overrides

    def handle(self, args, run):
        mc = run.mc
        selections = SELECTIONS if args.selection == 'all' else (mc.selection,)
        accumulator = trajectories.run_ensemble(mc, run.workers)
        out = run.output_path
        summary = {
            'n_traj': accumulator.n_total,
            'master_seed': mc.master_seed,
            'eta': mc.efficiency,
            'nu_r_mhz': mc.model.nu_r,
            'prep': mc.prep,
            'selections': {},
        }
        for selection in SELECTIONS:
            count = accumulator.count[selection]
            predicted = trajectories.predicted_fraction(mc, selection)
            binomial_se = math.sqrt(max(predicted * (1 - predicted), 0.0) / accumulator.n_total)
            fraction = count / accumulator.n_total
            summary['selections'][selection] = {
                'count': count,
                'fraction': fraction,
                'predicted_fraction': predicted,
                'binomial_se': binomial_se,
                'fraction_z': (fraction - predicted) / binomial_se if binomial_se > 0 else None,
            }

        failures = []
        for selection in selections:
            average = accumulator.average(selection)
            prediction = trajectories.predicted_average(mc, selection)
            z = trajectories.z_scores(average, prediction)
            McRowSerializer().write(out / f'mc_{selection}.csv', (
                {'t_us': t, 'mean_re': mean.real, 'mean_im': mean.imag, 'stderr': stderr,
                 'n_selected': average.n_selected}
                for t, mean, stderr in zip(average.times, average.mean, average.stderr)))
            McComparisonSerializer().write(out / f'mc_{selection}_compare.csv', (
                {'t_us': t, 'mean_re': mean.real, 'prediction_re': expected.real, 'stderr': stderr, 'z': score}
                for t, mean, expected, stderr, score in zip(average.times, average.mean, prediction,
                                                            average.stderr, z)))
            within, max_z = z_statistics(z)
            summary['selections'][selection].update({'bins_within_3_sigma': within, 'max_abs_z': max_z})
            logger.info(f"{selection}: {average.n_selected} shots selected, max |z| = {max_z}")
            if max_z is not None and max_z > HARD_Z_LIMIT:
                failures.append(f"{selection} (max |z| = {max_z:.3g})")
        write_json(out / 'mc_summary.json', summary)
        if failures:
            raise StatisticalFailure(f"record averages disagree with the prediction: {', '.join(failures)}")


class OracleCommand(BaseCommand):
    help = "Check the propagation engine against closed forms and the expm oracle"

    def handle(self, args, run):
        summary = oracle.run_oracle(run.model, max_nu_r=run.grid.nu_r_max)
        text = write_json(run.output_path / 'oracle.json', summary)
        print(text)
        if not oracle.all_passed(summary):
            failed = sorted(name for name, result in summary.items() if not result['pass'])
            raise NumericalError(f"engine checks failed: {', '.join(failed)}")


class TraceCommand(BaseCommand):
    help = "Predicted average field traces, raw and filtered, for a few drive amplitudes"

    def add_arguments(self, parser):
        parser.add_argument('--nu-r', type=float, nargs='+', default=list(DEFAULT_TRACE_RABI_FREQS),
                            help="Rabi frequencies (MHz)")
        parser.add_argument('--preps', choices=PREPARATIONS, nargs='+', default=['g', 'e'])

    def handle(self, args, run):
        stride = run.grid.time_stride(run.model)
        for nu_r in args.nu_r:
            run.model.check_step(nu_r)
        traces = detection.fresnel_traces(run.model, run.detection, args.nu_r, args.preps, run.filter_engine)
        rows = []
        for trace in traces:
            s_minus = detection.extract_s_minus(trace.raw, run.detection, trace.offset)
            s_minus_filtered = detection.extract_s_minus(trace.filtered, run.detection, trace.offset)
            for index in range(0, len(trace.raw.times), stride):
                rows.append({
                    't_us': trace.raw.times[index],
                    'nu_r_mhz': trace.nu_r,
                    'prep': trace.prep,
                    'v_re': trace.raw.v_re[index],
                    'v_im': trace.raw.v_im[index],
                    'v_re_filtered': trace.filtered.v_re[index],
                    'v_im_filtered': trace.filtered.v_im[index],
                    's_minus': s_minus[index],
                    's_minus_filtered': s_minus_filtered[index],
                    'sigma_z': trace.sigma_z[index],
                })
        path = TraceRowSerializer().write(run.output_path / 'trace.csv', rows)
        logger.info(f"Wrote {path}")


commands = {
    'map': MapCommand(),
    'cut': CutCommand(),
    'mc': McCommand(),
    'oracle': OracleCommand(),
    'trace': TraceCommand(),
}
