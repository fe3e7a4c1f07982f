// Browser entry point: boot the explorer against the same-origin service.

import { ApiClient } from './api.js'
import { initApp } from './app.js'

const root = document.getElementById('app')
if (root) {
  initApp(root, new ApiClient()).catch(err => {
    root.innerHTML = `<div class="error">${String(err)}</div>`
  })
}
