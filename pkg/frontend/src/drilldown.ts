// Group drill-down pane: condition set, size and score, the top-3 over- and
// under-diagnosed codes, and per-code Explain actions rendering rule drivers
// as signed bars. Numbers are printed with String() so every displayed value
// equals the report JSON field exactly.

import { Explanation, Inspection, MisdiagnosisEntry, RankingRow } from './types.js'

export interface DrilldownState {
  onExplain: (code: string, direction: 'over' | 'under') => void
}

export type DriversState =
  | { kind: 'idle' }
  | { kind: 'pending'; code: string; direction: string }
  | { kind: 'done'; explanation: Explanation }
  | { kind: 'error'; message: string; retry: () => void }

export function renderDrilldown(
  host: HTMLElement,
  row: RankingRow,
  inspection: Inspection | null,
  state: DrilldownState,
): void {
  host.replaceChildren()
  const head = document.createElement('div')
  head.className = 'drill-head'
  const title = document.createElement('h2')
  title.textContent = row.group
  const facts = document.createElement('p')
  facts.className = 'facts'
  facts.textContent =
    `rank ${String(row.rank)} · size ${String(row.size)}` +
    ` · disparity ${String(row.normalized)} (raw ${String(row.raw)})`
  head.append(title, facts)
  host.append(head)

  if (inspection === null) {
    const note = document.createElement('p')
    note.className = 'progress'
    note.textContent = 'Loading inspection…'
    host.append(note)
    return
  }

  const systematic =
    inspection.top_over.some(e => e.score !== 0) ||
    inspection.top_under.some(e => e.score !== 0)
  if (!systematic) {
    const note = document.createElement('p')
    note.className = 'no-error'
    note.textContent = 'No systematic error in this group.'
    host.append(note)
    return
  }
  host.append(
    codeTable('Over-diagnosed', 'over', inspection.top_over, state),
    codeTable('Under-diagnosed', 'under', inspection.top_under, state),
  )
}

function codeTable(
  heading: string,
  direction: 'over' | 'under',
  entries: MisdiagnosisEntry[],
  state: DrilldownState,
): HTMLElement {
  const box = document.createElement('div')
  box.className = `miscodes ${direction}`
  const title = document.createElement('h3')
  title.textContent = heading
  box.append(title)
  const table = document.createElement('table')
  for (const entry of entries) {
    const tr = document.createElement('tr')
    const code = document.createElement('td')
    code.className = 'code'
    code.textContent = entry.code
    const desc = document.createElement('td')
    desc.className = 'desc'
    desc.textContent = entry.description
    const score = document.createElement('td')
    score.className = 'score'
    score.textContent = String(entry.score)
    const action = document.createElement('td')
    const button = document.createElement('button')
    button.className = 'explain'
    button.dataset.code = entry.code
    button.dataset.direction = direction
    button.textContent = 'Explain'
    button.addEventListener('click', () => state.onExplain(entry.code, direction))
    action.append(button)
    tr.append(code, desc, score, action)
    table.append(tr)
  }
  box.append(table)
  return box
}

export function renderDrivers(host: HTMLElement, state: DriversState): void {
  host.replaceChildren()
  if (state.kind === 'idle') return
  if (state.kind === 'pending') {
    const note = document.createElement('p')
    note.className = 'progress'
    note.textContent = `Explaining ${state.code} (${state.direction})…`
    host.append(note)
    return
  }
  if (state.kind === 'error') {
    const note = document.createElement('p')
    note.className = 'error'
    note.textContent = state.message // upstream message, verbatim
    const retry = document.createElement('button')
    retry.className = 'retry'
    retry.textContent = 'Retry'
    retry.addEventListener('click', state.retry)
    host.append(note, retry)
    return
  }

  const explanation = state.explanation
  const title = document.createElement('h3')
  title.textContent =
    `Drivers for ${explanation.code} (${explanation.direction}), ` +
    `fidelity ${String(explanation.mean_fidelity)}`
  host.append(title)
  if (explanation.drivers.length === 0) {
    const note = document.createElement('p')
    note.className = 'no-error'
    note.textContent = 'No rule drivers for this code.'
    host.append(note)
    return
  }
  const chart = document.createElement('div')
  chart.className = 'drivers'
  for (const driver of explanation.drivers) {
    const rowEl = document.createElement('div')
    rowEl.className = 'driver-row'
    const label = document.createElement('span')
    label.className = 'driver-label'
    label.textContent = `${driver.code} ${String(driver.frequency)}`
    const bar = document.createElement('div')
    // presence pushes right (positive color), absence pushes left (negative)
    bar.className = `bar ${driver.direction === 'present' ? 'side-right' : 'side-left'}`
    bar.dataset.direction = driver.direction
    bar.style.width = `${driver.frequency * 50}%`
    rowEl.append(label, bar)
    chart.append(rowEl)
  }
  host.append(chart)
}
