// Control panel: one slider per cost weight bound to set_weight (debounced),
// the cost breakdown, solve stats, and a couple of action buttons.

import { Debouncer } from './coalesce';
import type { ClientEdit, StateMessage } from './protocol';

// slider ranges per weight family; sliders use a log-ish feel via fine steps
const WEIGHT_RANGES: Record<string, [number, number, number]> = {
  pose_position: [0, 200, 0.5],
  pose_orientation: [0, 100, 0.5],
  limit: [0, 500, 1],
  velocity: [0, 100, 0.5],
  rest: [0, 2, 0.005],
  smoothness: [0, 100, 0.5],
  acceleration: [0, 20, 0.1],
  jerk: [0, 5, 0.05],
  manipulability: [0, 5, 0.05],
  self_collision: [0, 100, 0.5],
  world_collision: [0, 200, 0.5],
};

export class ControlPanel {
  private sliders = new Map<string, HTMLInputElement>();
  private readouts = new Map<string, HTMLSpanElement>();
  private breakdownList: HTMLElement;
  private statsLine: HTMLElement;
  private statusDot: HTMLElement;
  private debouncer: Debouncer;

  constructor(
    container: HTMLElement,
    send: (edit: ClientEdit) => void,
    onEllipsoidToggle: (visible: boolean) => void,
    onGizmoMode: (mode: 'translate' | 'rotate') => void,
  ) {
    // slider edits debounce at <= 50 ms so scrubbing stays light on the wire
    this.debouncer = new Debouncer(send, 50);

    const title = document.createElement('h1');
    title.textContent = 'kinoptik';
    container.appendChild(title);

    this.statusDot = document.createElement('div');
    this.statusDot.className = 'status offline';
    this.statusDot.textContent = 'connecting';
    container.appendChild(this.statusDot);

    const weights = document.createElement('div');
    weights.className = 'section';
    const heading = document.createElement('h2');
    heading.textContent = 'cost weights';
    weights.appendChild(heading);
    for (const [name, [min, max, step]] of Object.entries(WEIGHT_RANGES)) {
      const row = document.createElement('label');
      row.className = 'slider-row';
      const text = document.createElement('span');
      text.textContent = name;
      const value = document.createElement('span');
      value.className = 'value';
      const slider = document.createElement('input');
      slider.type = 'range';
      slider.min = String(min);
      slider.max = String(max);
      slider.step = String(step);
      slider.addEventListener('input', () => {
        value.textContent = slider.value;
        this.debouncer.push({ type: 'set_weight', name, value: Number(slider.value) });
      });
      row.append(text, slider, value);
      weights.appendChild(row);
      this.sliders.set(name, slider);
      this.readouts.set(name, value);
    }
    container.appendChild(weights);

    const actions = document.createElement('div');
    actions.className = 'section actions';
    const translate = document.createElement('button');
    translate.textContent = 'drag: translate';
    translate.onclick = () => onGizmoMode('translate');
    const rotate = document.createElement('button');
    rotate.textContent = 'drag: rotate';
    rotate.onclick = () => onGizmoMode('rotate');
    const reseed = document.createElement('button');
    reseed.textContent = 'global re-seed';
    reseed.onclick = () => send({ type: 'reseed' });
    const reset = document.createElement('button');
    reset.textContent = 'reset';
    reset.onclick = () => send({ type: 'reset' });
    const ellipsoid = document.createElement('button');
    ellipsoid.textContent = 'manipulability ellipsoid';
    let visible = false;
    ellipsoid.onclick = () => {
      visible = !visible;
      ellipsoid.classList.toggle('active', visible);
      onEllipsoidToggle(visible);
    };
    actions.append(translate, rotate, reseed, reset, ellipsoid);
    container.appendChild(actions);

    const breakdown = document.createElement('div');
    breakdown.className = 'section';
    const bHeading = document.createElement('h2');
    bHeading.textContent = 'cost breakdown';
    breakdown.appendChild(bHeading);
    this.breakdownList = document.createElement('div');
    breakdown.appendChild(this.breakdownList);
    container.appendChild(breakdown);

    this.statsLine = document.createElement('div');
    this.statsLine.className = 'stats';
    container.appendChild(this.statsLine);
  }

  setConnected(connected: boolean): void {
    this.statusDot.className = `status ${connected ? 'online' : 'offline'}`;
    this.statusDot.textContent = connected ? 'connected' : 'reconnecting';
  }

  applyState(state: StateMessage): void {
    for (const [name, slider] of this.sliders) {
      const value = state.weights[name];
      if (value === undefined) continue;
      // do not fight an in-progress drag
      if (document.activeElement !== slider) {
        slider.value = String(value);
      }
      this.readouts.get(name)!.textContent = value.toFixed(3);
    }
    const rows = Object.entries(state.cost_breakdown)
      .map(([name, value]) => `<div class="row"><span>${name}</span><span>${value.toExponential(2)}</span></div>`)
      .join('');
    this.breakdownList.innerHTML = rows;
    const s = state.solve_stats;
    this.statsLine.textContent =
      `${s.iterations} iters, cost ${s.final_cost.toExponential(2)}, ${s.ms.toFixed(1)} ms`;
  }
}
