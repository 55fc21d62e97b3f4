/* tslint:disable */
/* eslint-disable */

/**
 * Planar cell solve at angle `degrees`, unit side.
 */
export class CellView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly converged: boolean;
    readonly density: number;
    readonly iterations: number;
    /**
     * Nodes per axis of the field grid.
     */
    readonly nodes: number;
    /**
     * Nodal values, first axis fastest (cube-local frame).
     */
    readonly values: Float64Array;
}

export function cell_solve(coefficient: string, values: Float64Array, p: number, degrees: number, eps: number, cells: number): CellView;

/**
 * Densities for `directions` equally spaced angles in `[0, 180)`.
 */
export function polar_scan(coefficient: string, values: Float64Array, p: number, eps: number, cells: number, directions: number): Float64Array;

/**
 * Optimal one-dimensional transition cost.
 */
export function transition_cost(potential: string, p: number): number;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_cellview_free: (a: number, b: number) => void;
    readonly cell_solve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly cellview_converged: (a: number) => number;
    readonly cellview_density: (a: number) => number;
    readonly cellview_iterations: (a: number) => number;
    readonly cellview_nodes: (a: number) => number;
    readonly cellview_values: (a: number) => [number, number];
    readonly polar_scan: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly transition_cost: (a: number, b: number, c: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
